#pragma once

// Excess persistence Delta = beta2 - beta1^2 with joint (seemingly unrelated)
// inference, and the inversion of the latent factor model:
//
//   beta1 = rho^2 lambda,  beta2 = rho^2 lambda^2
//   lambda = beta2 / beta1,  rho = sqrt(beta1^2 / beta2)

#include "mobilab/common.hpp"
#include "mobilab/mobility.hpp"
#include "mobilab/regression.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mobilab {

// Union: each equation uses every lineage with its own pair observed.
// TripletComplete: only lineages where both pairs are observed.
enum class SurSample { Union, TripletComplete };

struct DeltaOptions {
    OutcomeKind outcome = OutcomeKind::SchoolingYears;
    Statistic statistic = Statistic::PearsonCorrelation;
    PairType parent = PairType::Father;
    PairType grandparent = PairType::PaternalGrandfather;
    GenderFilter gender = GenderFilter::All;
    SurSample sample = SurSample::Union;
};

struct DeltaTest {
    std::uint32_t region_id = 0;
    double beta1 = kMissing;
    double beta2 = kMissing;
    double delta = kMissing;
    double var_beta1 = kMissing;
    double var_beta2 = kMissing;
    double cov_b1b2 = kMissing;
    double var_delta = kMissing;
    double t_stat = kMissing;
    double p_two_sided = kMissing;
    double p_one_sided = kMissing;  // H0: delta <= 0
    std::size_t n_parent_pairs = 0;
    std::size_t n_grandparent_pairs = 0;
    std::size_t n_common = 0;
    bool flagged = false;
    std::string flag_reason;
};

// Var(b2) + (2 b1)^2 Var(b1) - 2 (2 b1) Cov(b2, b1).
inline double delta_variance(double beta1, double var_beta1, double var_beta2, double cov_b1b2) {
    return var_beta2 + 4.0 * beta1 * beta1 * var_beta1 - 4.0 * beta1 * cov_b1b2;
}

// Fills delta, var_delta, t and p-values from the betas and their joint
// covariance. A non-positive variance flags the test and leaves t missing.
void finish_delta_test(DeltaTest& test);

// Throws an analysis error when either equation has fewer than three pairs.
DeltaTest delta_test(std::span<const LineageRecord> records, const DeltaOptions& options,
                     const OutcomeContext& ctx = {});

// One test per region in ascending id order; failures come back flagged.
std::vector<DeltaTest> delta_tests_by_region(const RegionGroups& groups, const DeltaOptions& options,
                                             const OutcomeContext& ctx = {});

struct RejectShares {
    std::size_t regions = 0;
    double delta_positive = kMissing;
    double delta_positive_weighted = kMissing;
    // t > 1.96: significant positive excess persistence.
    double t_above = kMissing;
    double t_above_weighted = kMissing;
    // |t| > 1.96.
    double two_sided = kMissing;
    double two_sided_weighted = kMissing;
    // t > 1.645: one-sided 5% test of H0: delta <= 0.
    double one_sided = kMissing;
    double one_sided_weighted = kMissing;
};
// Flagged tests are excluded. Weights default to grandparent pair counts.
RejectShares reject_shares(std::span<const DeltaTest> tests, std::span<const double> weights = {});

struct LatentInputs {
    std::uint32_t region_id = 0;
    double beta1_g1g2 = kMissing;  // child - parent
    double beta1_g2g3 = kMissing;  // parent - grandparent; missing falls back to beta1_g1g2
    double beta2 = kMissing;       // child - grandparent
    std::size_t n_grandparent_pairs = 0;
};

struct LatentEstimate {
    std::uint32_t region_id = 0;
    double beta1_adj = kMissing;
    double beta2 = kMissing;
    double lambda_hat = kMissing;
    double rho_hat = kMissing;
    bool valid = false;
    std::string reason;
    std::size_t n_grandparent_pairs = 0;
};

inline constexpr double kLatentGuardrail = 1.5;

LatentEstimate recover_latent(const LatentInputs& inputs);

struct LatentOptions {
    OutcomeKind outcome = OutcomeKind::SchoolingYears;
    // Correlations match the model; slopes are accepted but off-model.
    Statistic statistic = Statistic::PearsonCorrelation;
    bool balanced = false;
    GenderFilter gender = GenderFilter::All;
    // Use the father - paternal grandfather link for the geometric mean.
    bool use_g2g3 = true;
};

// Estimates the three region statistics and inverts them. Regions where a
// statistic cannot be estimated come back invalid with the reason.
std::vector<LatentEstimate> latent_by_region(const RegionGroups& groups, const LatentOptions& options,
                                             const OutcomeContext& ctx = {});

enum class LatentRegressors { Rho, Lambda, Both };

// Region beta2 on rho_hat and/or lambda_hat (logs of all three in log mode)
// over valid regions, weighted by grandparent pairs unless weighted is false.
// Requires three or more valid regions.
RegressionResult latent_regression(std::span<const LatentEstimate> estimates, LatentRegressors regressors,
                                   bool log_mode, const RegressionOptions& options = {},
                                   bool weighted = true);

// Regressor matrix and names shared with the inequality regressions.
Eigen::MatrixXd latent_design(std::span<const LatentEstimate> estimates, LatentRegressors regressors,
                              bool log_mode, std::vector<std::string>& names);

}  // namespace mobilab
