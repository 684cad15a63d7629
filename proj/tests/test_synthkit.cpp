#include "mobilab/rng.hpp"
#include "mobilab/synthkit.hpp"
#include "mobilab/regression.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

using namespace mobilab;

namespace {

RegionParams region(std::uint32_t id, std::size_t n, double rho, double lambda) {
    RegionParams r;
    r.region_id = id;
    r.n_lineages = n;
    r.schooling.rho = rho;
    r.schooling.lambda = lambda;
    r.earnings.rho = rho;
    r.earnings.lambda = lambda;
    return r;
}

std::pair<std::vector<double>, std::vector<double>> column_pair(const std::vector<LineageRecord>& recs, Relative a,
                                                                Relative b) {
    std::vector<double> x, y;
    for (const auto& r : recs) {
        const double va = r.at(a).schooling, vb = r.at(b).schooling;
        if (present(va) && present(vb)) {
            x.push_back(va);
            y.push_back(vb);
        }
    }
    return {x, y};
}

}  // namespace

TEST_CASE("streams are reproducible and keyed") {
    Stream a = substream(42, 1, 2), b = substream(42, 1, 2), c = substream(42, 2, 1);
    for (int i = 0; i < 100; ++i) {
        const auto va = a();
        CHECK(va == b());
        CHECK(va != c());
    }
    Stream u(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("homogeneous population reproduces the implied correlations") {
    GeneratorConfig cfg;
    cfg.seed = 11;
    cfg.with_earnings = false;
    cfg.paternal_line_only = true;
    cfg.regions = {region(1, 1'000'000, 0.89, 0.403)};
    const auto recs = generate_population(cfg);
    REQUIRE(recs.size() == 1'000'000);
    const auto [f, c1] = column_pair(recs, Relative::Father, Relative::Child);
    const auto [g, c2] = column_pair(recs, Relative::PaternalGrandfather, Relative::Child);
    CHECK(std::abs(pearson(f, c1) - implied_beta1(0.89, 0.403)) < 0.005);
    CHECK(std::abs(pearson(g, c2) - implied_beta2(0.89, 0.403)) < 0.005);
    CHECK(std::abs(implied_beta1(0.89, 0.403) - 0.319) < 0.001);
    CHECK(std::abs(implied_beta2(0.89, 0.403) - 0.129) < 0.001);
}

TEST_CASE("rho = 1 makes the observed process first-order Markov") {
    GeneratorConfig cfg;
    cfg.seed = 5;
    cfg.with_earnings = false;
    cfg.paternal_line_only = true;
    cfg.regions = {region(1, 400'000, 1.0, 0.5)};
    const auto recs = generate_population(cfg);
    const auto [f, c1] = column_pair(recs, Relative::Father, Relative::Child);
    const auto [g, c2] = column_pair(recs, Relative::PaternalGrandfather, Relative::Child);
    const double b1 = pearson(f, c1), b2 = pearson(g, c2);
    CHECK(std::abs(b2 - b1 * b1) < 0.006);
    CHECK(implied_delta(1.0, 0.5) == 0.0);
}

TEST_CASE("generation is deterministic and seed sensitive") {
    GeneratorConfig cfg;
    cfg.seed = 3;
    cfg.regions = {region(1, 500, 0.9, 0.4), region(2, 300, 0.8, 0.5)};
    const auto a = generate_population(cfg);
    const auto b = generate_population(cfg);
    REQUIRE(a.size() == 800);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_record(a[i], b[i]));
    cfg.seed = 4;
    const auto c = generate_population(cfg);
    CHECK_FALSE(same_record(a[0], c[0]));
    std::set<std::uint64_t> ids;
    for (const auto& r : a) ids.insert(r.child_id);
    CHECK(ids.size() == a.size());
}

TEST_CASE("missing rates thin out relatives") {
    GeneratorConfig cfg;
    cfg.seed = 8;
    auto r = region(1, 20'000, 0.9, 0.4);
    r.schooling.missing_rates[index_of(Relative::PaternalGrandfather)] = 0.3;
    cfg.regions = {r};
    const auto recs = generate_population(cfg);
    std::size_t missing = 0;
    for (const auto& rec : recs) missing += present(rec.at(Relative::PaternalGrandfather).schooling) ? 0 : 1;
    CHECK(std::abs(static_cast<double>(missing) / 20'000.0 - 0.3) < 0.02);
}

TEST_CASE("categorical mode emits attainment codes, monotone in the latent value") {
    GeneratorConfig cfg;
    cfg.seed = 2;
    cfg.outcome_mode = OutcomeMode::CategoricalEducation;
    cfg.regions = {region(1, 5000, 0.9, 0.4)};
    const auto recs = generate_population(cfg);
    for (const auto& rec : recs)
        for (Relative rel : kAllRelatives) {
            const double v = rec.at(rel).schooling;
            if (!present(v)) continue;
            CHECK(std::find(kSchoolingCodes.begin(), kSchoolingCodes.end(), v) != kSchoolingCodes.end());
        }
    cfg.outcome_mode = OutcomeMode::Continuous;
    const auto cont = generate_population(cfg);
    // Same latent draws: the coarsened value never reverses the order of the continuous one.
    for (std::size_t i = 1; i < recs.size(); ++i) {
        const double a = cont[i - 1].at(Relative::Child).schooling, b = cont[i].at(Relative::Child).schooling;
        if (a < b) CHECK(recs[i - 1].at(Relative::Child).schooling <= recs[i].at(Relative::Child).schooling);
    }
}

TEST_CASE("calibrated preset matches the described geography") {
    const auto sizes = calibrated_region_sizes();
    REQUIRE(sizes.size() == 290);
    CHECK(*std::min_element(sizes.begin(), sizes.end()) == 263);
    CHECK(*std::max_element(sizes.begin(), sizes.end()) == 56'969);
    const auto cfg = calibrated_config(2024);
    std::vector<double> rho, lambda, w;
    for (const auto& r : cfg.regions) {
        rho.push_back(r.schooling.rho);
        lambda.push_back(r.schooling.lambda);
        w.push_back(static_cast<double>(r.n_lineages));
        CHECK(r.schooling.rho <= 1.0);
        CHECK(r.schooling.lambda < 1.0);
    }
    CHECK(std::abs(weighted_mean(rho, w) - 0.89) < 0.01);
    CHECK(std::abs(weighted_mean(lambda, w) - 0.403) < 0.01);
    CHECK(weighted_sd(lambda, {}) > 0.05);

    CalibrationOptions flat;
    flat.heterogeneous = false;
    for (const auto& r : calibrated_config(2024, flat).regions) {
        CHECK(r.schooling.rho == doctest::Approx(0.89));
        CHECK(r.schooling.lambda == doctest::Approx(0.403));
    }
    CalibrationOptions scaled;
    scaled.total_lineages = 100'000;
    std::size_t total = 0;
    for (auto n : calibrated_region_sizes(100'000)) total += n;
    CHECK(std::abs(static_cast<double>(total) - 100'000.0) < 1000.0);
}

TEST_CASE("generator validation") {
    GeneratorConfig cfg;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.regions = {region(1, 10, 1.2, 0.4)};
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.regions = {region(1, 10, 0.9, 1.0)};
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.regions = {region(1, 0, 0.9, 0.4)};
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.regions = {region(1, 10, 0.9, 0.4)};
    CHECK_NOTHROW(validate(cfg));
    try {
        cfg.regions = {region(1, 10, 0.0, 0.4)};
        validate(cfg);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("earnings panel reproduces age-40 log earnings without noise") {
    GeneratorConfig cfg;
    cfg.seed = 6;
    cfg.outcome_mode = OutcomeMode::EarningsPanel;
    cfg.regions = {region(1, 50, 0.9, 0.4)};
    const auto recs = generate_population(cfg);
    PanelConfig pc = PanelConfig::defaults();
    pc.transitory_sd = 0.0;
    const auto panel = generate_earnings_panel(recs, pc);
    REQUIRE_FALSE(panel.empty());
    for (const auto& row : panel) {
        CHECK(row.age >= pc.age_min);
        CHECK(row.age <= pc.age_max);
        CHECK(row.year >= pc.year_first);
        CHECK(row.year <= pc.year_last);
    }
}
