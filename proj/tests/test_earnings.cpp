#include "mobilab/earnings.hpp"

#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

using namespace mobilab;

namespace {

RegionParams region(std::uint32_t id, std::size_t n) {
    RegionParams r;
    r.region_id = id;
    r.n_lineages = n;
    r.earnings.gen_means = {12.8, 12.4, 12.4};
    r.earnings.gen_sds = {0.5, 0.5, 0.5};
    r.schooling.gen_means = {13.0, 12.0, 9.0};
    r.schooling.gen_sds = {2.0, 2.0, 2.0};
    return r;
}

EarningsPanelRow row(std::uint64_t id, Gender g, int year, double log_earn) {
    EarningsPanelRow r;
    r.person_id = id;
    r.gender = g;
    r.year = year;
    r.age = 40;
    r.birth_year = year - 40;
    r.log_earnings = log_earn;
    return r;
}

}  // namespace

TEST_CASE("percentile ranks use (i - 0.5) / n with midranks for ties") {
    const auto r = percentile_ranks(std::vector<double>{3.0, 1.0, 2.0, 4.0});
    CHECK(r[0] == doctest::Approx(5.0 / 8.0));
    CHECK(r[1] == doctest::Approx(1.0 / 8.0));
    CHECK(r[2] == doctest::Approx(3.0 / 8.0));
    CHECK(r[3] == doctest::Approx(7.0 / 8.0));
    // Ties share the average of their positions 1/6 and 3/6.
    const auto t = percentile_ranks(std::vector<double>{5.0, 5.0, 9.0});
    CHECK(t[0] == doctest::Approx(1.0 / 3.0));
    CHECK(t[1] == doctest::Approx(1.0 / 3.0));
    CHECK(t[2] == doctest::Approx(5.0 / 6.0));
    CHECK(percentile_ranks(std::vector<double>{42.0})[0] == doctest::Approx(0.5));
}

TEST_CASE("rank properties: mean one half, inside (0, 1), invariant to monotone maps") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(57), e(57);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = std::round(z(rng) * 3.0);  // plenty of ties
            e[i] = std::exp(v[i]);
        }
        const auto r = percentile_ranks(v);
        const auto re = percentile_ranks(e);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            s += r[i];
            CHECK(r[i] > 0.0);
            CHECK(r[i] < 1.0);
            CHECK(r[i] == doctest::Approx(re[i]));
            for (std::size_t j = 0; j < r.size(); ++j)
                if (v[i] < v[j]) CHECK(r[i] < r[j]);
        }
        CHECK(s / static_cast<double>(r.size()) == doctest::Approx(0.5));
    }
}

TEST_CASE("earnings ranks are national within relative and child birth-year cells") {
    GeneratorConfig cfg;
    cfg.seed = 4;
    cfg.regions = {region(1, 400), region(2, 600)};
    auto recs = generate_population(cfg);
    assign_earnings_ranks(recs);
    std::map<std::pair<int, int>, std::vector<double>> cells;
    for (const auto& r : recs)
        for (Relative rel : kAllRelatives) {
            const double rk = r.at(rel).earnings_rank;
            if (present(r.at(rel).log_earnings)) {
                REQUIRE(present(rk));
                cells[{static_cast<int>(rel), r.child_birth_year}].push_back(rk);
            }
        }
    for (const auto& [key, ranks] : cells) {
        double s = 0.0;
        for (double v : ranks) s += v;
        CHECK(s / static_cast<double>(ranks.size()) == doctest::Approx(0.5));
    }
}

TEST_CASE("bottom-code floor: below a quarter of the male median is flagged, exactly") {
    // Male levels 100, 200, 400: median 200, floor 50.
    std::vector<EarningsPanelRow> rows{
        row(1, Gender::Male, 2000, std::log(100.0)),  row(2, Gender::Male, 2000, std::log(200.0)),
        row(3, Gender::Male, 2000, std::log(400.0)),  row(4, Gender::Female, 2000, std::log(50.0)),
        row(5, Gender::Female, 2000, std::log(49.99)), row(6, Gender::Male, 2001, std::log(10.0)),
    };
    flag_below_floor(rows, 0.25);
    CHECK_FALSE(rows[0].below_floor);
    CHECK_FALSE(rows[1].below_floor);
    CHECK_FALSE(rows[2].below_floor);
    CHECK_FALSE(rows[3].below_floor);  // exactly at the floor stays
    CHECK(rows[4].below_floor);
    CHECK_FALSE(rows[5].below_floor);  // its own year's median

    // Flagged rows never reach the fixed-effects estimation sample.
    rows[0].below_floor = true;
    const auto kept = estimation_rows(rows);
    for (const auto& r : kept) CHECK(r.person_id != 1);
}

TEST_CASE("noiseless panel: fixed effects recover the profiles and age-40 earnings exactly") {
    GeneratorConfig cfg;
    cfg.seed = 12;
    cfg.outcome_mode = OutcomeMode::EarningsPanel;
    cfg.regions = {region(1, 300)};
    auto recs = generate_population(cfg);
    PanelConfig pc = PanelConfig::defaults();
    pc.transitory_sd = 0.0;
    auto panel = generate_earnings_panel(recs, pc);
    for (auto& r : panel) r.below_floor = false;  // keep the design complete
    const FeModel model = fit_fe_model(panel);
    CHECK(model.r2 == doctest::Approx(1.0).epsilon(1e-10));
    for (double e : model.residuals) CHECK(std::abs(e) < 1e-8);

    // Quadratic terms are identified separately; the linear age and year
    // terms only through their sum, because age = year - birth year.
    for (const auto& [key, fit] : model.groups) {
        if (fit.n_persons < 3) continue;
        const auto& truth = pc.profiles[static_cast<std::size_t>(key)];
        CHECK(std::abs(fit.profile.c[1] - truth.c[1]) < 1e-8);
        CHECK(std::abs(fit.profile.c[3] - truth.c[3]) < 1e-8);
        CHECK(std::abs(fit.profile.c[0] + fit.profile.c[2] - truth.c[0] - truth.c[2]) < 1e-8);
    }

    EvalRule rule;
    rule.clamp_year = false;
    rule.demean_child_by_gender = false;
    rule.bottom_code_level = 1e-300;
    const auto keys = person_keys(recs);
    const auto pred = predict_at_40(model, keys, rule);
    std::map<std::uint64_t, double> truth;
    for (const auto& rec : recs)
        for (Relative rel : kAllRelatives)
            if (present(rec.at(rel).log_earnings)) truth[person_id(rec.child_id, rel)] = rec.at(rel).log_earnings;
    std::size_t compared = 0;
    for (const auto& p : pred.predictions) {
        auto it = truth.find(p.person_id);
        if (it == truth.end()) continue;
        CHECK(std::abs(p.log_earnings_at_40 - it->second) < 1e-8);
        ++compared;
    }
    CHECK(compared > 500);
}

TEST_CASE("predictions are bottom coded and child earnings demeaned by gender") {
    GeneratorConfig cfg;
    cfg.seed = 13;
    cfg.outcome_mode = OutcomeMode::EarningsPanel;
    cfg.regions = {region(1, 200)};
    auto recs = generate_population(cfg);
    auto panel = generate_earnings_panel(recs, PanelConfig::defaults());
    const FeModel model = fit_fe_model(panel);
    const auto keys = person_keys(recs);
    EvalRule rule;
    rule.bottom_code_level = std::exp(12.5);
    const auto pred = predict_at_40(model, keys, rule);
    std::map<std::uint64_t, const PersonKey*> by_id;
    for (const auto& k : keys) by_id[k.person_id] = &k;
    std::array<double, 2> sum{0.0, 0.0};
    for (const auto& p : pred.predictions) {
        CHECK(p.log_earnings_at_40 >= 12.5);
        const auto* k = by_id.at(p.person_id);
        if (k->child_generation) {
            CHECK(p.gender_demeaned);
            sum[static_cast<std::size_t>(k->gender)] += p.adjusted;
        }
    }
    CHECK(std::abs(sum[0]) < 1e-8);
    CHECK(std::abs(sum[1]) < 1e-8);

    attach_predictions(recs, pred);
    for (const auto& rec : recs)
        for (Relative rel : kAllRelatives)
            if (present(rec.at(rel).log_earnings)) CHECK(present(rec.at(rel).earnings_rank));
}

TEST_CASE("k-year mean uses the last k unflagged observations") {
    std::vector<EarningsPanelRow> rows{row(1, Gender::Male, 2000, 1.0), row(1, Gender::Male, 2001, 2.0),
                                       row(1, Gender::Male, 2002, 4.0), row(1, Gender::Male, 2003, 100.0)};
    rows[3].below_floor = true;
    const auto m = k_year_mean(rows, 2);
    CHECK(m.at(1) == doctest::Approx(3.0));
}
