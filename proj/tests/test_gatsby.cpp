#include "mobilab/gatsby.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace mobilab;

namespace {

double mad_gini(const std::vector<double>& x) {
    double s = 0.0, m = 0.0;
    for (double a : x) {
        m += a;
        for (double b : x) s += std::abs(a - b);
    }
    const double n = static_cast<double>(x.size());
    return s / (2.0 * n * m);
}

}  // namespace

TEST_CASE("sorted Gini equals the mean-absolute-difference oracle") {
    std::mt19937_64 rng(99);
    std::lognormal_distribution<double> ln(0.0, 0.8);
    std::uniform_int_distribution<int> len(2, 200);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(static_cast<std::size_t>(len(rng)));
        for (auto& v : x) v = ln(rng);
        CHECK(std::abs(gini(x) - mad_gini(x)) < 1e-12);
    }
}

TEST_CASE("Gini fixtures and invariances") {
    CHECK(gini(std::vector<double>{0.0, 100.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gini(std::vector<double>{3.0, 3.0, 3.0}) == doctest::Approx(0.0));
    std::vector<double> x{1.0, 5.0, 2.0, 8.0, 8.0};
    std::vector<double> y = x;
    for (auto& v : y) v *= 37.5;
    CHECK(std::abs(gini(x) - gini(y)) < 1e-12);
    // Integer weights equal replication.
    const std::vector<double> w{2.0, 1.0, 3.0, 1.0, 1.0};
    const std::vector<double> rep{1.0, 1.0, 5.0, 2.0, 2.0, 2.0, 8.0, 8.0};
    CHECK(std::abs(gini(x, w) - gini(rep)) < 1e-12);
    CHECK(gini(std::vector<double>{0.0, 0.0, 0.0, 10.0}) == doctest::Approx(0.75));
}

TEST_CASE("Gini input errors") {
    CHECK_THROWS_AS(gini(std::vector<double>{}), Error);
    try {
        gini(std::vector<double>{1.0, -1.0});
        FAIL("negative values accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
    CHECK_THROWS_AS(gini(std::vector<double>{0.0, 0.0}), Error);
}

TEST_CASE("Gatsby correlation on vectors") {
    const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5}, g{0.2, 0.25, 0.33, 0.38, 0.5};
    const auto r = gatsby_correlation(s, g, {}, {}, false);
    CHECK(r.correlation == doctest::Approx(pearson(s, g)));
    CHECK(r.regions == 5);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value < 0.01);
    CHECK_THROWS_AS(gatsby_correlation(std::vector<double>{1, 2}, std::vector<double>{1, 2}, {}, {}, false), Error);

    // Both series driven by size alone: correlation vanishes after size control.
    const std::vector<double> size{100, 200, 300, 400, 500, 600};
    std::vector<double> a, b;
    const std::vector<double> noise_a{0.01, -0.02, 0.015, 0.0, -0.01, 0.005}, noise_b{-0.01, 0.01, 0.0, 0.02, -0.02, 0.0};
    for (std::size_t i = 0; i < size.size(); ++i) {
        a.push_back(0.001 * size[i] + noise_a[i]);
        b.push_back(0.002 * size[i] + noise_b[i]);
    }
    const auto raw = gatsby_correlation(a, b, {}, size, false);
    const auto ctl = gatsby_correlation(a, b, {}, size, true);
    CHECK(raw.correlation > 0.95);
    CHECK(std::abs(ctl.correlation) < raw.correlation);
    CHECK(ctl.size_controlled);
}

TEST_CASE("Gatsby correlation matches estimates to inequality by region id") {
    std::vector<MobilityEstimate> est(4);
    std::vector<InequalityMeasure> ineq(4);
    const double beta[] = {0.2, 0.3, 0.25, 0.4}, gin[] = {0.3, 0.35, 0.31, 0.45};
    for (std::uint32_t i = 0; i < 4; ++i) {
        est[i].region_id = i + 1;
        est[i].beta = beta[i];
        est[i].n_pairs = 100;
        ineq[3 - i].region_id = i + 1;
        ineq[3 - i].gini = gin[i];
    }
    const auto r = gatsby_correlation(est, ineq, GatsbyOptions{false, false, 0});
    CHECK(r.correlation == doctest::Approx(pearson(std::vector<double>(beta, beta + 4), std::vector<double>(gin, gin + 4))));
    est[3].flagged = true;
    CHECK(gatsby_correlation(est, ineq).regions == 3);
}

TEST_CASE("inequality by region uses earnings levels") {
    std::vector<LineageRecord> recs(3);
    const double levels[] = {10.0, 20.0, 30.0};
    for (std::size_t i = 0; i < 3; ++i) {
        recs[i].region_id = 5;
        recs[i].at(Relative::Father).log_earnings = std::log(levels[i]);
        recs[i].at(Relative::PaternalGrandfather).log_earnings = std::log(10.0);
    }
    const auto groups = group_by_region(recs);
    const auto f = inequality_by_region(groups, InequalityGeneration::Father);
    REQUIRE(f.size() == 1);
    CHECK(f[0].gini == doctest::Approx(mad_gini({10.0, 20.0, 30.0})));
    CHECK(f[0].n == 3);
    const auto g = inequality_by_region(groups, InequalityGeneration::Grandfather);
    CHECK(g[0].gini == doctest::Approx(0.0));
}

TEST_CASE("latent inequality regression: Gini affine in lambda favours lambda") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ur(0.75, 1.0), ul(0.2, 0.6);
    std::normal_distribution<double> z(0.0, 0.005);
    std::vector<LatentEstimate> lat;
    std::vector<InequalityMeasure> ineq;
    for (std::uint32_t i = 0; i < 60; ++i) {
        const double rho = ur(rng), lambda = ul(rng);
        lat.push_back(recover_latent(
            LatentInputs{i, rho * rho * lambda, rho * rho * lambda, rho * rho * lambda * lambda, 100}));
        InequalityMeasure m;
        m.region_id = i;
        m.gini = 0.2 + 0.3 * lambda + z(rng);
        ineq.push_back(m);
    }
    const auto rl = latent_inequality_regression(ineq, lat, LatentRegressors::Lambda);
    const auto rr = latent_inequality_regression(ineq, lat, LatentRegressors::Rho);
    CHECK(rl.adj_r2 > rr.adj_r2);
    CHECK(rl.coefficient("lambda_hat") == doctest::Approx(0.3).epsilon(0.05));
}
