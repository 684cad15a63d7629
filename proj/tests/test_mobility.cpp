#include "mobilab/mobility.hpp"
#include "mobilab/earnings.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace mobilab;

namespace {

LineageRecord rec(std::uint32_t region, double child, double father, double pgf = kMissing,
                  Gender g = Gender::Male) {
    static std::uint64_t next = 1;
    LineageRecord r;
    r.child_id = next++;
    r.region_id = region;
    r.child_gender = g;
    r.child_birth_year = 1985;
    r.at(Relative::Child).schooling = child;
    r.at(Relative::Father).schooling = father;
    r.at(Relative::PaternalGrandfather).schooling = pgf;
    return r;
}

std::vector<LineageRecord> population(std::uint64_t seed, std::size_t n, double rho, double lambda,
                                      std::uint32_t regions = 1) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    for (std::uint32_t r = 1; r <= regions; ++r) {
        RegionParams p;
        p.region_id = r;
        p.n_lineages = n;
        p.schooling.rho = rho;
        p.schooling.lambda = lambda;
        p.earnings.rho = rho;
        p.earnings.lambda = lambda;
        cfg.regions.push_back(p);
    }
    auto recs = generate_population(cfg);
    assign_earnings_ranks(recs);
    return recs;
}

}  // namespace

TEST_CASE("slope influence fit reproduces OLS and its HC1 variance") {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 5};
    const auto fit = influence_fit(x, y, Statistic::RegressionSlope);
    CHECK(fit.beta == doctest::Approx(1.1));
    CHECK(std::abs(fit.alpha) < 1e-12);
    double s = 0.0;
    for (double p : fit.psi) s += p;
    CHECK(std::abs(s) < 1e-12);
    CHECK(std::abs(fit.variance() - 0.1132) < 1e-12);
}

TEST_CASE("correlation influence fit: estimate is Pearson, variance near (1 - r^2)^2 / n") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> z;
    const double r = 0.5;
    std::vector<double> x(20'000), y(20'000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = z(rng);
        y[i] = r * x[i] + std::sqrt(1 - r * r) * z(rng);
    }
    const auto fit = influence_fit(x, y, Statistic::PearsonCorrelation);
    CHECK(fit.beta == doctest::Approx(pearson(x, y)).epsilon(1e-12));
    const double oracle = std::pow(1 - r * r, 2) / static_cast<double>(x.size());
    CHECK(fit.variance() / oracle == doctest::Approx(1.0).epsilon(0.06));
}

TEST_CASE("influence fit rejects tiny or degenerate samples") {
    CHECK_THROWS_AS(influence_fit(std::vector<double>{1, 2}, std::vector<double>{1, 2}, Statistic::RegressionSlope),
                    Error);
    CHECK_THROWS_AS(
        influence_fit(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}, Statistic::PearsonCorrelation),
        Error);
}

TEST_CASE("pair types, gender filter and balanced samples") {
    std::vector<LineageRecord> rs{
        rec(1, 12, 10, 8, Gender::Male),     rec(1, 14, 12, kMissing, Gender::Female),
        rec(1, 10, 9, 9, Gender::Male),      rec(1, 16, 15, 11, Gender::Female),
        rec(1, 11, kMissing, 7, Gender::Male),
    };
    rs[0].at(Relative::Mother).schooling = 12;
    const OutcomeContext ctx = make_outcome_context(rs);
    CHECK(pair_value(rs[0], PairType::ParentalAverage, OutcomeKind::SchoolingYears, ctx) == doctest::Approx(11.0));
    CHECK(pair_value(rs[1], PairType::ParentalAverage, OutcomeKind::SchoolingYears, ctx) == doctest::Approx(12.0));

    EstimatorSpec spec;
    CHECK(collect_pairs(rs, spec, ctx).anchor.size() == 4);
    spec.gender = GenderFilter::Sons;
    CHECK(collect_pairs(rs, spec, ctx).anchor.size() == 2);
    spec.gender = GenderFilter::All;
    spec.balanced = true;
    CHECK(collect_pairs(rs, spec, ctx).anchor.size() == 3);
    spec.pair = PairType::PaternalGrandfather;
    spec.balanced = false;
    CHECK(collect_pairs(rs, spec, ctx).anchor.size() == 4);
}

TEST_CASE("binary education splits at the generation median, ties low") {
    std::vector<LineageRecord> rs{rec(1, 10, 8), rec(1, 12, 9), rec(1, 14, 9)};
    const OutcomeContext ctx = make_outcome_context(rs);
    CHECK(ctx.schooling_medians[0] == doctest::Approx(12.0));
    CHECK(outcome_value(rs[1], Relative::Child, OutcomeKind::BinaryEducation, ctx) == 0.0);
    CHECK(outcome_value(rs[2], Relative::Child, OutcomeKind::BinaryEducation, ctx) == 1.0);
    CHECK(outcome_value(rs[1], Relative::Father, OutcomeKind::BinaryEducation, ctx) == 0.0);
}

TEST_CASE("regions are estimated in id order and small ones are flagged, not dropped") {
    std::vector<LineageRecord> rs{rec(7, 12, 10), rec(7, 14, 12), rec(7, 10, 9), rec(7, 16, 13),
                                  rec(3, 11, 10), rec(3, 12, 9)};
    const auto groups = group_by_region(rs);
    REQUIRE(groups.ids == std::vector<std::uint32_t>{3, 7});
    const auto est = estimate_by_region(groups, EstimatorSpec{}, make_outcome_context(rs));
    REQUIRE(est.size() == 2);
    CHECK(est[0].region_id == 3);
    CHECK(est[0].flagged);
    CHECK(est[0].n_pairs == 2);
    CHECK_FALSE(est[1].flagged);
    CHECK(est[1].n_pairs == 4);
}

TEST_CASE("P25 upward mobility is alpha + 0.25 beta for rank slopes only") {
    const auto recs = population(3, 4000, 0.8, 0.5);
    EstimatorSpec spec;
    spec.outcome = OutcomeKind::EarningsRank;
    spec.statistic = Statistic::RegressionSlope;
    const auto est = estimate_region(recs, spec);
    CHECK(p25_upward_mobility(est) == doctest::Approx(est.alpha + 0.25 * est.beta));
    // Rank-rank regression: the line passes through (0.5, 0.5).
    CHECK(est.alpha + 0.5 * est.beta == doctest::Approx(0.5).epsilon(0.01));
    spec.statistic = Statistic::PearsonCorrelation;
    CHECK_THROWS_AS(p25_upward_mobility(estimate_region(recs, spec)), Error);
}

TEST_CASE("the rank slope is close to the rank correlation") {
    const auto recs = population(9, 20'000, 0.8, 0.5);
    EstimatorSpec s;
    s.outcome = OutcomeKind::EarningsRank;
    s.statistic = Statistic::RegressionSlope;
    EstimatorSpec c = s;
    c.statistic = Statistic::PearsonCorrelation;
    CHECK(std::abs(estimate_region(recs, s).beta - estimate_region(recs, c).beta) < 0.01);
}

TEST_CASE("CEF bins: linear relation gives index 0, a curved one a positive index") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 0.05);
    std::vector<double> p(10'000), lin(10'000), curve(10'000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u(rng);
        lin[i] = 0.3 + 0.4 * p[i] + z(rng);
        curve[i] = 0.2 + 0.8 * (p[i] - 0.5) * (p[i] - 0.5) * 4.0 + z(rng);
    }
    const auto a = cef_bins(p, lin, 20, "national");
    CHECK(a.bins.size() == 20);
    CHECK(a.bins[0].center == doctest::Approx(0.025));
    CHECK(a.linearity_index >= 0.0);
    CHECK(a.linearity_index < 0.01);
    const auto b = cef_bins(p, curve, 20, "national");
    CHECK(b.linearity_index > 1.0);
    std::size_t total = 0;
    for (const auto& bin : b.bins) total += bin.n;
    CHECK(total == p.size());
    CHECK_THROWS_AS(cef_bins(std::vector<double>{1.2}, std::vector<double>{0.5}, 10, "x"), Error);
}

TEST_CASE("summaries weight by pairs and skip flagged regions") {
    std::vector<MobilityEstimate> est(3);
    est[0].beta = 0.2;
    est[0].n_pairs = 100;
    est[1].beta = 0.4;
    est[1].n_pairs = 300;
    est[2].beta = 9.0;
    est[2].n_pairs = 100;
    est[2].flagged = true;
    const auto s = summarize(est);
    CHECK(s.regions == 2);
    CHECK(s.mean_unweighted == doctest::Approx(0.3));
    CHECK(s.mean_weighted == doctest::Approx(0.35));
}

TEST_CASE("cross-measure matrix is a symmetric correlation matrix") {
    const auto recs = population(4, 1500, 0.85, 0.45, 6);
    const auto groups = group_by_region(recs);
    const auto ctx = make_outcome_context(recs);
    EstimatorSpec a;
    EstimatorSpec b;
    b.pair = PairType::PaternalGrandfather;
    EstimatorSpec c;
    c.outcome = OutcomeKind::EarningsRank;
    c.statistic = Statistic::RegressionSlope;
    std::vector<StatisticSeries> series{{"a", estimate_by_region(groups, a, ctx)},
                                        {"b", estimate_by_region(groups, b, ctx)},
                                        {"c", estimate_by_region(groups, c, ctx)}};
    const auto m = cross_measure_matrix(series, 1000);
    REQUIRE(m.values.size() == 3);
    CHECK(m.regions.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(m.values[i][i] == doctest::Approx(1.0));
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(m.values[i][j] == doctest::Approx(m.values[j][i]));
            CHECK(std::abs(m.values[i][j]) <= 1.0 + 1e-12);
        }
    }
    CHECK_THROWS_AS(cross_measure_matrix(series, 100'000), Error);
}

TEST_CASE("labels and parsers round trip") {
    for (auto p : {PairType::Father, PairType::Mother, PairType::ParentalAverage, PairType::PaternalGrandfather,
                   PairType::MaternalGrandfather, PairType::PaternalGrandmother, PairType::MaternalGrandmother,
                   PairType::GrandparentalAverage})
        CHECK(parse_pair(to_string(p)) == p);
    for (auto o : {OutcomeKind::SchoolingYears, OutcomeKind::EarningsRank, OutcomeKind::LogEarnings,
                   OutcomeKind::BinaryEducation})
        CHECK(parse_outcome(to_string(o)) == o);
    CHECK(parse_gender_filter("daughters") == GenderFilter::Daughters);
    CHECK_FALSE(parse_pair("uncle").has_value());
}
