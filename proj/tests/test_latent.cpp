#include "mobilab/latent.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace mobilab;

namespace {

std::vector<LineageRecord> population(std::uint64_t seed, std::size_t n, double rho, double lambda,
                                      std::uint32_t regions = 1, double missing = 0.0) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.with_earnings = false;
    for (std::uint32_t r = 1; r <= regions; ++r) {
        RegionParams p;
        p.region_id = r;
        p.n_lineages = n;
        p.schooling.rho = rho;
        p.schooling.lambda = lambda;
        p.schooling.missing_rates[index_of(Relative::Father)] = missing;
        p.schooling.missing_rates[index_of(Relative::PaternalGrandfather)] = missing;
        cfg.regions.push_back(p);
    }
    return generate_population(cfg);
}

LatentInputs inputs(double rho, double lambda) {
    LatentInputs in;
    in.region_id = 1;
    in.beta1_g1g2 = rho * rho * lambda;
    in.beta1_g2g3 = rho * rho * lambda;
    in.beta2 = rho * rho * lambda * lambda;
    in.n_grandparent_pairs = 100;
    return in;
}

}  // namespace

TEST_CASE("latent inversion recovers exact model moments") {
    for (double rho : {0.6, 0.8, 0.95, 1.0})
        for (double lambda : {0.1, 0.4, 0.7}) {
            const auto e = recover_latent(inputs(rho, lambda));
            REQUIRE(e.valid);
            CHECK(std::abs(e.rho_hat - rho) < 1e-12);
            CHECK(std::abs(e.lambda_hat - lambda) < 1e-12);
        }
}

TEST_CASE("identity closure holds for arbitrary positive inputs") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.05, 0.6);
    for (int i = 0; i < 1000; ++i) {
        LatentInputs in;
        in.beta1_g1g2 = u(rng);
        in.beta1_g2g3 = u(rng);
        in.beta2 = u(rng) * 0.5;
        const auto e = recover_latent(in);
        CHECK(e.beta1_adj == doctest::Approx(std::sqrt(in.beta1_g1g2 * in.beta1_g2g3)));
        if (!e.valid) continue;
        CHECK(std::abs(e.rho_hat * e.rho_hat * e.lambda_hat - e.beta1_adj) < 1e-12);
        CHECK(std::abs(e.rho_hat * e.rho_hat * e.lambda_hat * e.lambda_hat - e.beta2) < 1e-12);
    }
}

TEST_CASE("latent guardrails") {
    LatentInputs in = inputs(0.9, 0.4);
    in.beta2 = -0.01;
    CHECK_FALSE(recover_latent(in).valid);
    in.beta2 = 0.0;
    CHECK_FALSE(recover_latent(in).valid);
    in = inputs(0.9, 0.4);
    in.beta1_g2g3 = -0.1;
    CHECK_FALSE(recover_latent(in).valid);
    // lambda_hat = beta2 / beta1 = 2 > 1.5
    in = LatentInputs{1, 0.1, 0.1, 0.2, 10};
    CHECK_FALSE(recover_latent(in).valid);
    // rho_hat = sqrt(beta1^2 / beta2) = sqrt(0.25 / 0.09) > 1.5
    in = LatentInputs{1, 0.5, 0.5, 0.09, 10};
    CHECK_FALSE(recover_latent(in).valid);
    // Missing g2g3 falls back to the child-parent statistic.
    in = LatentInputs{1, 0.3, kMissing, 0.12, 10};
    const auto e = recover_latent(in);
    CHECK(e.valid);
    CHECK(e.beta1_adj == doctest::Approx(0.3));
}

TEST_CASE("delta variance formula and p-values") {
    CHECK(delta_variance(0.3, 0.01, 0.02, 0.005) == doctest::Approx(0.02 + 4 * 0.09 * 0.01 - 4 * 0.3 * 0.005));
    DeltaTest t;
    t.beta1 = 0.3;
    t.beta2 = 0.09 + 1.959963984540054 * 0.1;
    t.var_beta1 = 0.0;
    t.var_beta2 = 0.01;
    t.cov_b1b2 = 0.0;
    finish_delta_test(t);
    CHECK(t.t_stat == doctest::Approx(1.959963984540054));
    CHECK(t.p_two_sided == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(t.p_one_sided == doctest::Approx(0.025).epsilon(1e-9));
    DeltaTest bad = t;
    bad.var_beta2 = -1.0;
    finish_delta_test(bad);
    CHECK(bad.flagged);
    CHECK_FALSE(present(bad.t_stat));
}

TEST_CASE("joint covariance is the scaled cross product of influence terms") {
    const auto recs = population(5, 3000, 0.85, 0.45, 1, 0.2);
    for (SurSample sample : {SurSample::Union, SurSample::TripletComplete}) {
        DeltaOptions opt;
        opt.sample = sample;
        const auto t = delta_test(recs, opt);
        std::vector<double> x1, y1, x2, y2;
        std::vector<int> s1, s2;
        for (const auto& r : recs) {
            const double c = r.at(Relative::Child).schooling, f = r.at(Relative::Father).schooling,
                         g = r.at(Relative::PaternalGrandfather).schooling;
            const bool h1 = present(c) && present(f), h2 = present(c) && present(g);
            const bool k1 = sample == SurSample::Union ? h1 : h1 && h2;
            const bool k2 = sample == SurSample::Union ? h2 : h1 && h2;
            s1.push_back(k1 ? static_cast<int>(x1.size()) : -1);
            s2.push_back(k2 ? static_cast<int>(x2.size()) : -1);
            if (k1) x1.push_back(f), y1.push_back(c);
            if (k2) x2.push_back(g), y2.push_back(c);
        }
        const auto f1 = influence_fit(x1, y1, Statistic::PearsonCorrelation);
        const auto f2 = influence_fit(x2, y2, Statistic::PearsonCorrelation);
        double cross = 0.0;
        std::size_t common = 0;
        for (std::size_t i = 0; i < s1.size(); ++i)
            if (s1[i] >= 0 && s2[i] >= 0) {
                cross += f1.psi[static_cast<std::size_t>(s1[i])] * f2.psi[static_cast<std::size_t>(s2[i])];
                ++common;
            }
        const double n1 = static_cast<double>(x1.size()), n2 = static_cast<double>(x2.size());
        CHECK(t.n_common == common);
        CHECK(t.cov_b1b2 == doctest::Approx(std::sqrt(f1.dof_factor * f2.dof_factor) * cross / (n1 * n2)));
        CHECK(t.beta1 == doctest::Approx(f1.beta));
        CHECK(t.var_beta2 == doctest::Approx(f2.variance()));
        if (sample == SurSample::TripletComplete) CHECK(t.n_parent_pairs == t.n_grandparent_pairs);
        else CHECK(t.n_parent_pairs > t.n_common);
        // Both equations share the child: positive covariance under positive persistence.
        CHECK(t.cov_b1b2 > 0.0);
    }
}

TEST_CASE("delta tests by region flag small regions") {
    auto recs = population(6, 500, 0.9, 0.4, 3);
    std::vector<LineageRecord> kept;
    std::size_t in_two = 0;
    for (const auto& r : recs)
        if (r.region_id != 2 || in_two++ < 2) kept.push_back(r);
    const auto tests = delta_tests_by_region(group_by_region(kept), DeltaOptions{});
    REQUIRE(tests.size() == 3);
    CHECK_FALSE(tests[0].flagged);
    CHECK(tests[1].flagged);
    CHECK(tests[1].region_id == 2);
    CHECK_FALSE(tests[2].flagged);
}

TEST_CASE("reject shares count and weight non-flagged tests") {
    std::vector<DeltaTest> t(4);
    t[0].delta = 0.1, t[0].t_stat = 2.5, t[0].n_grandparent_pairs = 300;
    t[1].delta = 0.05, t[1].t_stat = 1.7, t[1].n_grandparent_pairs = 100;
    t[2].delta = -0.02, t[2].t_stat = -2.1, t[2].n_grandparent_pairs = 100;
    t[3].flagged = true;
    const auto s = reject_shares(t);
    CHECK(s.regions == 3);
    CHECK(s.delta_positive == doctest::Approx(2.0 / 3.0));
    CHECK(s.delta_positive_weighted == doctest::Approx(0.8));
    CHECK(s.t_above == doctest::Approx(1.0 / 3.0));
    CHECK(s.one_sided == doctest::Approx(2.0 / 3.0));
    CHECK(s.two_sided == doctest::Approx(2.0 / 3.0));
    CHECK(s.two_sided_weighted == doctest::Approx(0.8));
    CHECK_THROWS_AS(reject_shares(t, std::vector<double>{1.0}), Error);
}

TEST_CASE("log-mode latent regression returns (2, 2) with unit R2") {
    std::vector<LatentEstimate> est;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ur(0.7, 1.0), ul(0.2, 0.6);
    for (std::uint32_t i = 0; i < 30; ++i) {
        const auto e = recover_latent(LatentInputs{i, 0.3 * ur(rng), 0.3 * ur(rng), 0.1 * ul(rng) + 0.02, 50 + i});
        if (e.valid) est.push_back(e);
    }
    REQUIRE(est.size() >= 10);
    const auto r = latent_regression(est, LatentRegressors::Both, true);
    CHECK(std::abs(r.coefficient("log_rho_hat") - 2.0) < 1e-8);
    CHECK(std::abs(r.coefficient("log_lambda_hat") - 2.0) < 1e-8);
    CHECK(std::abs(r.r2 - 1.0) < 1e-8);
    const auto lin = latent_regression(est, LatentRegressors::Lambda, false);
    CHECK(lin.names == std::vector<std::string>{"const", "lambda_hat"});
    std::vector<LatentEstimate> two(est.begin(), est.begin() + 2);
    CHECK_THROWS_AS(latent_regression(two, LatentRegressors::Rho, false), Error);
}

TEST_CASE("latent estimates by region track the generating parameters") {
    const auto recs = population(9, 60'000, 0.85, 0.5, 2);
    LatentOptions opt;
    const auto est = latent_by_region(group_by_region(recs), opt);
    REQUIRE(est.size() == 2);
    for (const auto& e : est) {
        CHECK(e.valid);
        CHECK(std::abs(e.lambda_hat - 0.5) < 0.06);
        CHECK(std::abs(e.rho_hat - 0.85) < 0.06);
    }
}
