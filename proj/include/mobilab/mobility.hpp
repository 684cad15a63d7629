#pragma once

// Region-level inter- and multigenerational mobility statistics and the
// linearity diagnostics of the rank-rank relation.

#include "mobilab/common.hpp"
#include "mobilab/regression.hpp"
#include "mobilab/synthkit.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mobilab {

enum class OutcomeKind { SchoolingYears, EarningsRank, LogEarnings, BinaryEducation };
enum class Statistic { RegressionSlope, PearsonCorrelation };
enum class PairType {
    Father,
    Mother,
    ParentalAverage,
    PaternalGrandfather,
    MaternalGrandfather,
    PaternalGrandmother,
    MaternalGrandmother,
    GrandparentalAverage,
};
enum class Weighting { Unweighted, PairCount };
enum class GenderFilter { All, Sons, Daughters };

struct EstimatorSpec {
    OutcomeKind outcome = OutcomeKind::SchoolingYears;
    Statistic statistic = Statistic::PearsonCorrelation;
    PairType pair = PairType::Father;
    // Dependent-side person. The child by default; the father gives the
    // parent-grandparent (G2-G3) link.
    Relative anchor = Relative::Child;
    Weighting weighting = Weighting::PairCount;
    GenderFilter gender = GenderFilter::All;
    // Keep only lineages with child, father and paternal grandfather observed.
    bool balanced = false;

    std::string label() const;
    bool operator==(const EstimatorSpec&) const = default;
};

std::string_view to_string(OutcomeKind o);
std::string_view to_string(Statistic s);
std::string_view to_string(PairType p);
std::string_view to_string(Weighting w);
std::string_view to_string(GenderFilter g);
std::optional<OutcomeKind> parse_outcome(std::string_view s);
std::optional<Statistic> parse_statistic(std::string_view s);
std::optional<PairType> parse_pair(std::string_view s);
std::optional<GenderFilter> parse_gender_filter(std::string_view s);

// Generation-specific schooling medians; binary education is 1 above the
// median and 0 at or below it.
struct OutcomeContext {
    std::array<double, 3> schooling_medians{kMissing, kMissing, kMissing};
};
OutcomeContext make_outcome_context(std::span<const LineageRecord> records);

double outcome_value(const LineageRecord& rec, Relative r, OutcomeKind outcome,
                     const OutcomeContext& ctx);

struct GenerationalAverage {
    double value = kMissing;
    int contributors = 0;
};
// Mean over the observed relatives of one generation (1 = parents,
// 2 = grandparents); missing when none is observed.
std::vector<GenerationalAverage> generational_average(std::span<const LineageRecord> records,
                                                      int generation, OutcomeKind outcome,
                                                      const OutcomeContext& ctx = {});

bool passes_gender(const LineageRecord& rec, GenderFilter g);

// Value on the regressor side of a pair: one relative or a generational average.
double pair_value(const LineageRecord& rec, PairType p, OutcomeKind outcome, const OutcomeContext& ctx);

struct PairSample {
    std::vector<double> relative;  // regressor
    std::vector<double> anchor;    // dependent
};
PairSample collect_pairs(std::span<const LineageRecord> records, const EstimatorSpec& spec,
                         const OutcomeContext& ctx);

struct MobilityEstimate {
    std::uint32_t region_id = 0;
    EstimatorSpec spec;
    double alpha = kMissing;
    double beta = kMissing;
    // HC1 for slopes; the robust influence-function SE for correlations.
    double se_beta = kMissing;
    std::size_t n_pairs = 0;
    double r2 = kMissing;
    bool flagged = false;
    std::string flag_reason;
};

// A statistic with its per-observation influence terms, so that
// beta_hat - beta ~ mean(psi). Sums of products of psi over shared
// observations give robust cross-equation covariances.
struct InfluenceFit {
    double alpha = kMissing;
    double beta = kMissing;
    double r2 = kMissing;
    std::vector<double> psi;
    // n / (n - 2), the HC1 degrees-of-freedom correction.
    double dof_factor = 1.0;

    double variance() const;
};
// Throws when fewer than three pairs remain or the regressor has no variance.
InfluenceFit influence_fit(std::span<const double> x, std::span<const double> y, Statistic statistic);

// Throws when fewer than three pairs remain or the regressor has no variance.
MobilityEstimate estimate_region(std::span<const LineageRecord> records, const EstimatorSpec& spec,
                                 const OutcomeContext& ctx);
MobilityEstimate estimate_region(std::span<const LineageRecord> records, const EstimatorSpec& spec);

// Records grouped by region id, ascending.
struct RegionGroups {
    std::vector<std::uint32_t> ids;
    std::vector<std::vector<LineageRecord>> records;
};
RegionGroups group_by_region(std::span<const LineageRecord> records);

// One estimate per region in ascending id order. Regions that cannot be
// estimated are returned flagged, never dropped.
std::vector<MobilityEstimate> estimate_by_region(const RegionGroups& groups, const EstimatorSpec& spec,
                                                 const OutcomeContext& ctx);

double p25_upward_mobility(const MobilityEstimate& estimate);

struct CefBin {
    double center = 0.0;
    double mean = kMissing;
    std::size_t n = 0;
};
struct CefProfile {
    std::string level;  // region id or "national"
    std::vector<CefBin> bins;
    double r2_linear = kMissing;
    double r2_quadratic = kMissing;
    double linearity_index = kMissing;
};
CefProfile cef_bins(std::span<const LineageRecord> records, const EstimatorSpec& spec, int n_bins,
                    const std::string& level, const OutcomeContext& ctx = {});
CefProfile cef_bins(std::span<const double> parent_rank, std::span<const double> child_rank, int n_bins,
                    const std::string& level);

// Regional linearity: mean quadratic R2 over mean linear R2, minus 1, with
// means optionally weighted by pairs.
double mean_linearity_index(const RegionGroups& groups, const EstimatorSpec& spec, bool weighted,
                            std::size_t min_pairs, const OutcomeContext& ctx);

struct StatisticSeries {
    std::string name;
    std::vector<MobilityEstimate> estimates;
};
struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::uint32_t> regions;
    std::vector<std::vector<double>> values;
};
// Pair-count weighted correlations across regions that pass the size filter
// in every series. The weight of a region is its smallest pair count.
CorrelationMatrix cross_measure_matrix(std::span<const StatisticSeries> series,
                                       std::size_t min_pairs = 1000);

// Pair-count weighted and unweighted summary of region estimates.
struct SeriesSummary {
    double mean_unweighted = kMissing;
    double sd_unweighted = kMissing;
    double mean_weighted = kMissing;
    double sd_weighted = kMissing;
    std::size_t regions = 0;
};
SeriesSummary summarize(std::span<const MobilityEstimate> estimates, std::size_t min_pairs = 2);

}  // namespace mobilab
