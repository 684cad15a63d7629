#pragma once

// Two-way fixed-effects earnings predictor: log earnings on person effects
// plus gender-by-education quadratic profiles in age and calendar year,
// evaluated at age 40, and the national percentile ranking.

#include "mobilab/common.hpp"
#include "mobilab/synthkit.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mobilab {

inline constexpr std::array<const char*, 4> kProfileTerms{"age", "age2", "year", "year2"};

inline int group_key(Gender g, int edu_group) {
    return static_cast<int>(g) * kEducationGroups + edu_group;
}

struct GroupFit {
    // Coefficients on the centred basis of ProfileCoefficients; terms that
    // were dropped for collinearity are zero and not estimated.
    ProfileCoefficients profile;
    std::array<bool, 4> estimated{false, false, false, false};
    double intercept = 0.0;
    std::size_t n_rows = 0;
    std::size_t n_persons = 0;
    std::vector<std::string> dropped_terms;
};

struct FeModel {
    std::unordered_map<std::uint64_t, double> person_effects;  // mean zero within each group
    std::map<int, GroupFit> groups;
    double r2 = 0.0;
    std::size_t n_rows = 0;
    std::size_t n_persons = 0;
    int year_min = 0;
    int year_max = 0;
    std::vector<std::string> diagnostics;
    // Per estimation row, in the order of the filtered panel.
    std::vector<double> residuals;
};

struct FeOptions {
    int age_min = 25;
    int age_max = 63;
    double collinearity_tolerance = 1e-9;
};

// Rows flagged below the earnings floor or outside the age window are
// excluded. Slopes come from within-person demeaned OLS per group; person
// effects are person-mean residuals, centred within the group.
FeModel fit_fe_model(std::span<const EarningsPanelRow> panel, const FeOptions& options = {});

// Rows that fit_fe_model keeps, in order.
std::vector<EarningsPanelRow> estimation_rows(std::span<const EarningsPanelRow> panel,
                                              const FeOptions& options = {});

struct PersonKey {
    std::uint64_t person_id = 0;
    Gender gender = Gender::Male;
    int edu_group = kMissingEducationGroup;
    int birth_year = 0;
    bool child_generation = false;
    // Ranking cell: relationship type and the anchor child's birth year.
    Relative relationship = Relative::Child;
    int child_birth_year = 0;
};

struct EvalRule {
    int age = 40;
    // Calendar year birth_year + age, clamped to the estimation window.
    bool clamp_year = true;
    std::optional<int> common_year;
    bool demean_child_by_gender = true;
    double bottom_code_level = 1000.0;
};

struct PredictedEarnings {
    std::uint64_t person_id = 0;
    double log_earnings_at_40 = kMissing;  // bottom-coded level
    bool gender_demeaned = false;
    double adjusted = kMissing;            // value used for ranking and estimation
    double rank = kMissing;
    Relative relationship = Relative::Child;
    int child_birth_year = 0;
};

struct PredictionReport {
    std::vector<PredictedEarnings> predictions;
    std::vector<std::string> warnings;
    std::size_t without_effect = 0;  // persons absent from the estimation panel
};

PredictionReport predict_at_40(const FeModel& model, std::span<const PersonKey> persons,
                               const EvalRule& rule = {});

// (i - 0.5) / n percentile ranks with midranks for ties.
std::vector<double> percentile_ranks(std::span<const double> values);

// Ranks predictions separately per (relationship, child birth year) cell.
void rank_within_cells(std::span<PredictedEarnings> predictions);

// National ranks of log earnings per (relative, child birth year) written
// into earnings_rank.
void assign_earnings_ranks(std::span<LineageRecord> records);

// Person keys for every relative with a known birth year; the relationship and
// child birth year define the ranking cell.
std::vector<PersonKey> person_keys(std::span<const LineageRecord> records);

// Replaces log earnings in the records with the (adjusted) predictions and
// re-ranks. Relatives without a prediction become missing.
void attach_predictions(std::span<LineageRecord> records, const PredictionReport& report);

// Mean of the last k observed log earnings per person, for comparisons with
// short-run averages.
std::unordered_map<std::uint64_t, double> k_year_mean(std::span<const EarningsPanelRow> panel,
                                                      int k);

}  // namespace mobilab
