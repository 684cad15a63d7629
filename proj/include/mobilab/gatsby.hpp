#pragma once

// Regional inequality and its cross-region association with mobility: the
// inter- and multigenerational Great Gatsby curves.

#include "mobilab/common.hpp"
#include "mobilab/latent.hpp"
#include "mobilab/mobility.hpp"
#include "mobilab/regression.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mobilab {

// Population Gini (no small-sample correction). With weights, the Lorenz
// curve uses cumulative weight shares. Ties need no special handling: the
// sorted formula does not depend on the order among equal values.
double gini(std::span<const double> values, std::span<const double> weights = {});

enum class InequalityGeneration { Father, Grandfather };

struct InequalityMeasure {
    std::uint32_t region_id = 0;
    InequalityGeneration generation = InequalityGeneration::Grandfather;
    double gini = kMissing;    // of earnings levels
    double sd_log = kMissing;  // of log earnings
    std::size_t n = 0;
};

// Gini of exp(log earnings) among fathers or paternal grandfathers per region.
std::vector<InequalityMeasure> inequality_by_region(const RegionGroups& groups,
                                                    InequalityGeneration generation);

struct GatsbyResult {
    std::string label;
    double correlation = kMissing;
    double p_value = kMissing;
    bool weighted = true;
    bool size_controlled = false;
    std::size_t regions = 0;
};

struct GatsbyOptions {
    bool weighted = true;
    // Residualise both series on region size before correlating.
    bool size_control = false;
    std::size_t min_pairs = 0;
};

// Matches regions by id; flagged estimates and regions below min_pairs are
// skipped. Weights and sizes are the estimates' pair counts. Needs three
// regions. The p-value uses the t approximation with n - 2 (n - 3 when size
// controlled) degrees of freedom and ignores that both series are estimated.
GatsbyResult gatsby_correlation(std::span<const MobilityEstimate> mobility,
                                std::span<const InequalityMeasure> inequality,
                                const GatsbyOptions& options = {});

// The same on plain vectors; sizes are only used when size controlled.
GatsbyResult gatsby_correlation(std::span<const double> statistic, std::span<const double> inequality,
                                std::span<const double> weights, std::span<const double> sizes,
                                bool size_control);

// Regional Gini on rho_hat and/or lambda_hat over valid regions, weighted by
// grandparent pairs unless weighted is false.
RegressionResult latent_inequality_regression(std::span<const InequalityMeasure> inequality,
                                              std::span<const LatentEstimate> latent,
                                              LatentRegressors regressors,
                                              const RegressionOptions& options = {}, bool weighted = true);

}  // namespace mobilab
