#pragma once

// Synthetic three-generation populations from the latent factor model
//
//   y_g = rho * e_g + u_g,        Var(u) = 1 - rho^2
//   e_g = lambda * e_{g-1} + v_g, Var(v) = 1 - lambda^2
//
// with the grandparent endowment drawn from the stationary N(0, 1). Observed
// outcomes are affinely mapped to per-generation means and standard
// deviations. Two outcome channels are generated per person: schooling and
// log earnings, each with its own (rho, lambda) and a configurable
// correlation between their latent innovations.

#include "mobilab/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobilab {

struct RelativeOutcome {
    double schooling = kMissing;
    double log_earnings = kMissing;
    double earnings_rank = kMissing;

    bool operator==(const RelativeOutcome&) const = default;
};

struct LineageRecord {
    std::uint64_t child_id = 0;
    std::uint32_t region_id = 0;
    int child_birth_year = 0;
    Gender child_gender = Gender::Male;
    std::array<RelativeOutcome, kRelativeCount> outcomes{};

    RelativeOutcome& at(Relative r) { return outcomes[index_of(r)]; }
    const RelativeOutcome& at(Relative r) const { return outcomes[index_of(r)]; }
};

// NaN-aware equality: missing compares equal to missing.
bool same_record(const LineageRecord& a, const LineageRecord& b);

// Parameters of one outcome channel. Index 0 of the per-generation arrays is
// the child generation, 1 the parents, 2 the grandparents.
struct ChannelParams {
    double rho = 0.9;
    double lambda = 0.4;
    std::array<double, 3> gen_means{0.0, 0.0, 0.0};
    std::array<double, 3> gen_sds{1.0, 1.0, 1.0};
    std::array<double, kRelativeCount> missing_rates{};
};

struct RegionParams {
    std::uint32_t region_id = 0;
    std::size_t n_lineages = 0;
    ChannelParams schooling;
    ChannelParams earnings;
    // Latent correlation between spouses (mother vs father, grandmother vs
    // grandfather).
    double spousal_correlation = 0.5;
    // Aggregate region used for cluster-robust inference.
    int cluster = 0;

    double rho() const { return schooling.rho; }
    double lambda() const { return schooling.lambda; }
};

enum class OutcomeMode { Continuous, CategoricalEducation, EarningsPanel };
enum class ShockDistribution { Gaussian, StudentT5 };

// Departure from the steady state, applied only when steady_state is false.
struct Drift {
    std::array<double, 3> mean_shift{0.0, 0.0, 0.0};
    std::array<double, 3> sd_scale{1.0, 1.0, 1.0};
    double initial_latent_sd = 1.0;
};

struct CategoricalThresholds {
    // Six strictly increasing cumulative shares per generation; values at or
    // below the k-th generation quantile map to schooling code k.
    std::array<std::vector<double>, 3> shares;

    static CategoricalThresholds defaults();
    static CategoricalThresholds uniform(std::vector<double> shares);
};

struct GeneratorConfig {
    std::uint64_t seed = 1;
    std::vector<RegionParams> regions;
    OutcomeMode outcome_mode = OutcomeMode::Continuous;
    bool steady_state = true;
    std::optional<Drift> drift;
    ShockDistribution shocks = ShockDistribution::Gaussian;
    // Correlation between schooling and earnings latent innovations.
    double channel_correlation = 0.6;
    // Only child, father and paternal grandfather; cheaper for Monte Carlo.
    bool paternal_line_only = false;
    bool with_earnings = true;
    // Censor observed schooling to [0, 30] years; off for standardized scales.
    bool censor_schooling = false;
    int child_birth_year_first = 1981;
    int child_birth_year_last = 1989;
    CategoricalThresholds thresholds = CategoricalThresholds::defaults();
};

void validate(const RegionParams& region);
void validate(const ChannelParams& channel, const std::string& where);
void validate(const GeneratorConfig& config);

std::vector<LineageRecord> generate_population(const GeneratorConfig& config);

// 290 regions whose sizes span 263 to 56,969 lineages with a long upper tail
// (mean near 3,100). Sizes are rescaled when total_lineages > 0.
std::vector<std::size_t> calibrated_region_sizes(std::size_t total_lineages = 0);

struct CalibrationOptions {
    std::size_t total_lineages = 0;  // 0 keeps the native sizes
    bool heterogeneous = true;       // false: every region gets the central values
};

// Regional heterogeneity centred on rho = 0.89, lambda = 0.403 for schooling
// and rho = 0.756, lambda = 0.431 for earnings. Regional dispersion of log
// earnings rises with the schooling lambda, which plants an inequality link.
GeneratorConfig calibrated_config(std::uint64_t seed, const CalibrationOptions& options = {});

// Maps schooling to the seven-value code set by generation-specific
// quantiles. Monotone within a generation.
void apply_categorical_education(std::span<LineageRecord> records,
                                 const CategoricalThresholds& thresholds);

// Population moments implied by the model.
inline double implied_beta1(double rho, double lambda) { return rho * rho * lambda; }
inline double implied_beta2(double rho, double lambda) { return rho * rho * lambda * lambda; }
inline double implied_delta(double rho, double lambda) {
    return rho * rho * lambda * lambda * (1.0 - rho * rho);
}

// ---------------------------------------------------------------------------
// Person-year earnings panel

inline constexpr int kEducationGroups = 8;  // seven attainment levels + missing
inline constexpr int kMissingEducationGroup = 7;
int education_group(double schooling);

struct EarningsPanelRow {
    std::uint64_t person_id = 0;
    std::uint32_t region_id = 0;
    Gender gender = Gender::Male;
    int edu_group = kMissingEducationGroup;
    int birth_year = 0;
    int year = 0;
    int age = 0;
    double log_earnings = 0.0;
    bool below_floor = false;

    bool operator==(const EarningsPanelRow&) const = default;
};

// Coefficients on (a, a^2, t, t^2) with a = age - 40 and t = year - 2000.
struct ProfileCoefficients {
    std::array<double, 4> c{0.0, 0.0, 0.0, 0.0};
    double eval(int age, int year) const;
};

struct PanelConfig {
    std::uint64_t seed = 7;
    int year_first = 1968;
    int year_last = 2020;
    int age_min = 25;
    int age_max = 63;
    double transitory_sd = 0.25;
    double floor_share_of_male_median = 0.25;
    // Indexed by gender * kEducationGroups + edu_group.
    std::array<ProfileCoefficients, 2 * kEducationGroups> profiles{};

    static PanelConfig defaults();
};

inline std::uint64_t person_id(std::uint64_t child_id, Relative r) {
    return child_id * 8 + index_of(r);
}
int relative_birth_year(const LineageRecord& record, Relative r);

// Requires records generated in earnings-panel mode. Each person's effect is
// set so that the noiseless profile reproduces their generated log earnings
// at age 40.
std::vector<EarningsPanelRow> generate_earnings_panel(std::span<const LineageRecord> records,
                                                      const PanelConfig& config);

// Marks rows whose earnings fall below the configured share of that year's
// male median.
void flag_below_floor(std::span<EarningsPanelRow> rows, double share_of_male_median);

}  // namespace mobilab
