#pragma once

// Sampling-error diagnostics and robustness drivers: placebo reshuffling of
// pairs across regions, repeated subsamples, and Monte Carlo recovery of the
// latent parameters.

#include "mobilab/common.hpp"
#include "mobilab/latent.hpp"
#include "mobilab/mobility.hpp"
#include "mobilab/synthkit.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mobilab {

// Fisher-Yates shuffle driven by a counter-based stream.
void shuffle_indices(std::span<std::size_t> idx, std::uint64_t seed, std::uint64_t key);

struct PlaceboConfig {
    std::uint64_t seed = 1;
    int n_permutations = 20;
    std::size_t split_threshold = 2000;  // small regions have at most this many pairs
};
void validate(const PlaceboConfig& config);

enum class RegionGroup { Small, Large, All };
std::string_view to_string(RegionGroup g);

struct DispersionReport {
    RegionGroup group = RegionGroup::All;
    std::size_t regions = 0;
    double mean_pairs = kMissing;
    double actual_sd = kMissing;
    double placebo_sd = kMissing;  // averaged over permutations
    double ratio = kMissing;       // placebo / actual, when actual_sd > 0
};

struct PlaceboResult {
    std::vector<DispersionReport> reports;  // small, large, all
    std::vector<std::uint32_t> regions;     // regions with an estimate
    std::vector<std::size_t> pairs;
    std::vector<double> actual;
    std::vector<std::vector<double>> placebo;  // [permutation][region]
    double pooled_actual = kMissing;
    std::vector<double> pooled_placebo;  // per permutation, equal to pooled_actual
};

// Pairs are pooled across regions and dealt back out in random order with
// every region keeping its pair count. Needs two estimable regions.
PlaceboResult placebo_reshuffle(const RegionGroups& groups, const PlaceboConfig& config,
                                const EstimatorSpec& spec, const OutcomeContext& ctx = {});

struct ReportEntry {
    std::string name;
    double value = kMissing;
    double se = kMissing;
};
using CoefficientReport = std::vector<ReportEntry>;
using Analysis = std::function<CoefficientReport(std::span<const LineageRecord>)>;

struct SubsampleConfig {
    std::uint64_t seed = 1;
    int replicates = 10;
    double fraction = 1.0 / 3.0;
};
void validate(const SubsampleConfig& config);

// Sorted lineage indices of one replicate.
std::vector<std::size_t> subsample_indices(std::size_t n, const SubsampleConfig& config, int replicate);

// Mean value and mean SE of every entry across replicates. Every replicate
// must report the same entries in the same order.
CoefficientReport subsample_replicates(std::span<const LineageRecord> records, const SubsampleConfig& config,
                                       const Analysis& analysis);

struct RecoveryConfig {
    std::uint64_t seed = 1;
    std::vector<double> rhos{0.7, 0.8, 0.9, 1.0};
    std::vector<double> lambdas{0.2, 0.4, 0.6};
    std::vector<std::size_t> sizes{100000};
    int replicates = 100;
    Statistic statistic = Statistic::PearsonCorrelation;
    SurSample sample = SurSample::Union;
    ShockDistribution shocks = ShockDistribution::Gaussian;
    // Missingness applied to father and grandfather outcomes.
    double missing_rate = 0.0;
};
void validate(const RecoveryConfig& config);

struct MomentSummary {
    double truth = kMissing;
    double mean = kMissing;
    double bias = kMissing;
    double sd = kMissing;
    double mc_se = kMissing;  // sd / sqrt(replicates)
};

struct RecoveryCell {
    double rho = 0.0;
    double lambda = 0.0;
    std::size_t n = 0;
    int replicates = 0;
    int invalid = 0;  // replicates failing the latent guardrails
    MomentSummary beta1, beta2, delta, lambda_hat, rho_hat;
    double mean_var_delta = kMissing;
    double empirical_var_delta = kMissing;
    // Share with |delta_hat - delta| / se < 1.96.
    double coverage = kMissing;
    double rejection_two_sided = kMissing;  // |t| > 1.96
    double rejection_one_sided = kMissing;  // t > 1.645
    double corr_rho_lambda = kMissing;      // across replicates
};

RecoveryCell run_recovery_cell(const RecoveryConfig& config, double rho, double lambda, std::size_t n,
                               std::uint64_t cell_key);
std::vector<RecoveryCell> recovery_experiment(const RecoveryConfig& config);

}  // namespace mobilab
