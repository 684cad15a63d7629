#include "mobilab/harness.hpp"

#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <set>

using namespace mobilab;

namespace {

std::vector<LineageRecord> population(std::uint64_t seed, const std::vector<std::size_t>& sizes, double rho,
                                      double lambda) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.with_earnings = false;
    for (std::size_t r = 0; r < sizes.size(); ++r) {
        RegionParams p;
        p.region_id = static_cast<std::uint32_t>(r + 1);
        p.n_lineages = sizes[r];
        p.schooling.rho = rho;
        p.schooling.lambda = lambda;
        cfg.regions.push_back(p);
    }
    return generate_population(cfg);
}

}  // namespace

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<std::size_t> a(1000), b(1000);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    shuffle_indices(a, 5, 1);
    shuffle_indices(b, 5, 1);
    CHECK(a == b);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
    shuffle_indices(b, 5, 2);
    CHECK(a != b);
}

TEST_CASE("placebo keeps region sizes and the pooled statistic") {
    const auto recs = population(3, {300, 800, 2500, 4000}, 0.9, 0.4);
    PlaceboConfig pc;
    pc.seed = 4;
    pc.n_permutations = 5;
    const auto res = placebo_reshuffle(group_by_region(recs), pc, EstimatorSpec{});
    REQUIRE(res.regions.size() == 4);
    REQUIRE(res.placebo.size() == 5);
    CHECK(res.pairs[0] == 300);
    for (double pooled : res.pooled_placebo) CHECK(pooled == doctest::Approx(res.pooled_actual).epsilon(1e-12));
    REQUIRE(res.reports.size() == 3);
    CHECK(res.reports[0].group == RegionGroup::Small);
    CHECK(res.reports[0].regions == 2);
    CHECK(res.reports[1].regions == 2);
    // Same seed, same placebo draws.
    const auto again = placebo_reshuffle(group_by_region(recs), pc, EstimatorSpec{});
    CHECK(again.placebo == res.placebo);
}

TEST_CASE("homogeneous regions: placebo dispersion matches actual dispersion") {
    const auto recs = population(7, std::vector<std::size_t>(60, 1500), 0.9, 0.4);
    PlaceboConfig pc;
    pc.seed = 8;
    const auto res = placebo_reshuffle(group_by_region(recs), pc, EstimatorSpec{});
    const auto& all = res.reports.back();
    CHECK(all.group == RegionGroup::All);
    CHECK(all.ratio > 0.75);
    CHECK(all.ratio < 1.3);
}

TEST_CASE("placebo configuration errors") {
    PlaceboConfig pc;
    pc.n_permutations = 0;
    CHECK_THROWS_AS(validate(pc), Error);
    const auto one = population(1, {100}, 0.9, 0.4);
    CHECK_THROWS_AS(placebo_reshuffle(group_by_region(one), PlaceboConfig{}, EstimatorSpec{}), Error);
}

TEST_CASE("subsample indices are sorted, sized and reproducible") {
    SubsampleConfig sc;
    sc.seed = 3;
    const auto a = subsample_indices(900, sc, 0);
    CHECK(a.size() == 300);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == a.size());
    CHECK(a == subsample_indices(900, sc, 0));
    CHECK(a != subsample_indices(900, sc, 1));
    sc.fraction = 0.0;
    CHECK_THROWS_AS(validate(sc), Error);
}

TEST_CASE("subsample replicates average every entry") {
    const auto recs = population(2, {3000}, 0.9, 0.4);
    SubsampleConfig sc;
    sc.seed = 1;
    sc.replicates = 4;
    int calls = 0;
    const Analysis count = [&](std::span<const LineageRecord> sub) {
        ++calls;
        return CoefficientReport{{"n", static_cast<double>(sub.size()), 1.0}};
    };
    const auto avg = subsample_replicates(recs, sc, count);
    CHECK(calls == 4);
    REQUIRE(avg.size() == 1);
    CHECK(avg[0].value == doctest::Approx(1000.0));
    CHECK(avg[0].se == doctest::Approx(1.0));
    int k = 0;
    const Analysis unstable = [&](std::span<const LineageRecord>) {
        return CoefficientReport{{k++ == 0 ? "a" : "b", 1.0, 1.0}};
    };
    CHECK_THROWS_AS(subsample_replicates(recs, sc, unstable), Error);
}

TEST_CASE("recovery cell summarises replicates") {
    RecoveryConfig rc;
    rc.seed = 5;
    rc.replicates = 40;
    const auto cell = run_recovery_cell(rc, 0.9, 0.4, 5000, 1);
    CHECK(cell.replicates == 40);
    CHECK(cell.beta1.truth == doctest::Approx(0.324));
    CHECK(cell.beta2.truth == doctest::Approx(0.1296));
    CHECK(std::abs(cell.beta1.bias) < 4 * cell.beta1.mc_se + 1e-3);
    CHECK(cell.coverage > 0.8);
    CHECK(cell.corr_rho_lambda < 0.0);
}
