#include "mobilab/harness.hpp"

#include "mobilab/parallel.hpp"
#include "mobilab/regression.hpp"
#include "mobilab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mobilab {

namespace {

constexpr std::uint64_t kPlaceboKey = 0x706c616365626fULL;
constexpr std::uint64_t kSubsampleKey = 0x73756273616d70ULL;
constexpr std::uint64_t kRecoveryKey = 0x7265636f766572ULL;

double sd_or_missing(const std::vector<double>& v) { return v.size() >= 2 ? weighted_sd(v, {}) : kMissing; }

MomentSummary summarise(const std::vector<double>& draws, double truth) {
    MomentSummary s;
    s.truth = truth;
    if (draws.empty()) return s;
    s.mean = mean(draws);
    s.bias = s.mean - truth;
    if (draws.size() >= 2) {
        s.sd = weighted_sd(draws, {});
        s.mc_se = s.sd / std::sqrt(static_cast<double>(draws.size()));
    }
    return s;
}

}  // namespace

void shuffle_indices(std::span<std::size_t> idx, std::uint64_t seed, std::uint64_t key) {
    Stream s = substream(seed, key);
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(s.uniform() * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
}

void validate(const PlaceboConfig& c) {
    if (c.n_permutations < 1) throw config_error("placebo: n_permutations must be at least 1");
}

std::string_view to_string(RegionGroup g) {
    switch (g) {
        case RegionGroup::Small: return "small";
        case RegionGroup::Large: return "large";
        case RegionGroup::All: return "all";
    }
    return "all";
}

PlaceboResult placebo_reshuffle(const RegionGroups& groups, const PlaceboConfig& config,
                                const EstimatorSpec& spec, const OutcomeContext& ctx) {
    validate(config);
    if (groups.ids.size() < 2) throw analysis_error("placebo reshuffling needs at least two regions");
    PlaceboResult res;
    std::vector<double> pool_x, pool_y;
    for (std::size_t r = 0; r < groups.ids.size(); ++r) {
        PairSample p = collect_pairs(groups.records[r], spec, ctx);
        if (p.anchor.size() < 3) continue;
        double beta;
        try {
            beta = influence_fit(p.relative, p.anchor, spec.statistic).beta;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
            continue;
        }
        res.regions.push_back(groups.ids[r]);
        res.pairs.push_back(p.anchor.size());
        res.actual.push_back(beta);
        pool_x.insert(pool_x.end(), p.relative.begin(), p.relative.end());
        pool_y.insert(pool_y.end(), p.anchor.begin(), p.anchor.end());
    }
    if (res.regions.size() < 2) throw analysis_error("placebo reshuffling needs at least two estimable regions");
    res.pooled_actual = influence_fit(pool_x, pool_y, spec.statistic).beta;

    const auto perms = static_cast<std::size_t>(config.n_permutations);
    res.placebo.assign(perms, std::vector<double>(res.regions.size(), kMissing));
    res.pooled_placebo.assign(perms, kMissing);
    parallel_for(perms, [&](std::size_t p) {
        std::vector<std::size_t> idx(pool_x.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        shuffle_indices(idx, config.seed, derive_key(kPlaceboKey, p));
        std::vector<double> x, y, all_x, all_y;
        std::size_t offset = 0;
        for (std::size_t r = 0; r < res.regions.size(); ++r) {
            x.clear();
            y.clear();
            for (std::size_t k = 0; k < res.pairs[r]; ++k) {
                x.push_back(pool_x[idx[offset + k]]);
                y.push_back(pool_y[idx[offset + k]]);
            }
            offset += res.pairs[r];
            try {
                res.placebo[p][r] = influence_fit(x, y, spec.statistic).beta;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Analysis) throw;
            }
            all_x.insert(all_x.end(), x.begin(), x.end());
            all_y.insert(all_y.end(), y.begin(), y.end());
        }
        res.pooled_placebo[p] = influence_fit(all_x, all_y, spec.statistic).beta;
    });

    for (RegionGroup g : {RegionGroup::Small, RegionGroup::Large, RegionGroup::All}) {
        auto member = [&](std::size_t r) {
            if (g == RegionGroup::All) return true;
            const bool small = res.pairs[r] <= config.split_threshold;
            return g == RegionGroup::Small ? small : !small;
        };
        DispersionReport rep;
        rep.group = g;
        std::vector<double> actual;
        double pairs = 0.0;
        for (std::size_t r = 0; r < res.regions.size(); ++r) {
            if (!member(r)) continue;
            actual.push_back(res.actual[r]);
            pairs += static_cast<double>(res.pairs[r]);
        }
        rep.regions = actual.size();
        if (!actual.empty()) rep.mean_pairs = pairs / static_cast<double>(actual.size());
        rep.actual_sd = sd_or_missing(actual);
        std::vector<double> sds;
        for (std::size_t p = 0; p < perms; ++p) {
            std::vector<double> v;
            for (std::size_t r = 0; r < res.regions.size(); ++r)
                if (member(r) && present(res.placebo[p][r])) v.push_back(res.placebo[p][r]);
            const double sd = sd_or_missing(v);
            if (present(sd)) sds.push_back(sd);
        }
        if (!sds.empty()) rep.placebo_sd = mean(sds);
        if (present(rep.actual_sd) && rep.actual_sd > 0.0 && present(rep.placebo_sd))
            rep.ratio = rep.placebo_sd / rep.actual_sd;
        res.reports.push_back(rep);
    }
    return res;
}

void validate(const SubsampleConfig& c) {
    if (!(c.fraction > 0.0 && c.fraction <= 1.0)) throw config_error("subsample fraction must lie in (0, 1]");
    if (c.replicates < 1) throw config_error("subsample replicates must be at least 1");
}

std::vector<std::size_t> subsample_indices(std::size_t n, const SubsampleConfig& config, int replicate) {
    validate(config);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto m = static_cast<std::size_t>(std::llround(config.fraction * static_cast<double>(n)));
    if (m >= n) return idx;
    shuffle_indices(idx, config.seed, derive_key(kSubsampleKey, static_cast<std::uint64_t>(replicate)));
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

CoefficientReport subsample_replicates(std::span<const LineageRecord> records, const SubsampleConfig& config,
                                       const Analysis& analysis) {
    validate(config);
    CoefficientReport avg;
    std::vector<int> value_count, se_count;
    for (int rep = 0; rep < config.replicates; ++rep) {
        const auto idx = subsample_indices(records.size(), config, rep);
        std::vector<LineageRecord> sub;
        sub.reserve(idx.size());
        for (std::size_t i : idx) sub.push_back(records[i]);
        const CoefficientReport out = analysis(sub);
        if (rep == 0) {
            avg = out;
            for (auto& e : avg) {
                value_count.push_back(present(e.value) ? 1 : 0);
                se_count.push_back(present(e.se) ? 1 : 0);
                if (!present(e.value)) e.value = 0.0;
                if (!present(e.se)) e.se = 0.0;
            }
            continue;
        }
        if (out.size() != avg.size()) throw analysis_error("subsample analyses report different entries");
        for (std::size_t k = 0; k < out.size(); ++k) {
            if (out[k].name != avg[k].name) throw analysis_error("subsample analyses report different entries");
            if (present(out[k].value)) {
                avg[k].value += out[k].value;
                ++value_count[k];
            }
            if (present(out[k].se)) {
                avg[k].se += out[k].se;
                ++se_count[k];
            }
        }
    }
    for (std::size_t k = 0; k < avg.size(); ++k) {
        avg[k].value = value_count[k] > 0 ? avg[k].value / value_count[k] : kMissing;
        avg[k].se = se_count[k] > 0 ? avg[k].se / se_count[k] : kMissing;
    }
    return avg;
}

void validate(const RecoveryConfig& c) {
    if (c.rhos.empty() || c.lambdas.empty() || c.sizes.empty()) throw config_error("recovery grid is empty");
    for (double r : c.rhos)
        if (!(r > 0.0 && r <= 1.0)) throw config_error("recovery grid: rho must lie in (0, 1]");
    for (double l : c.lambdas)
        if (!(l >= 0.0 && l < 1.0)) throw config_error("recovery grid: lambda must lie in [0, 1)");
    for (std::size_t n : c.sizes)
        if (n < 10) throw config_error("recovery grid: at least 10 lineages per replicate");
    if (c.replicates < 2) throw config_error("recovery grid: at least two replicates");
    if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0)) throw config_error("recovery grid: bad missing rate");
}

RecoveryCell run_recovery_cell(const RecoveryConfig& config, double rho, double lambda, std::size_t n,
                               std::uint64_t cell_key) {
    validate(config);
    RecoveryCell cell;
    cell.rho = rho;
    cell.lambda = lambda;
    cell.n = n;
    cell.replicates = config.replicates;

    struct Draw {
        DeltaTest test;
        LatentEstimate latent;
        bool ok = false;
    };
    std::vector<Draw> draws(static_cast<std::size_t>(config.replicates));

    DeltaOptions dopt;
    dopt.statistic = config.statistic;
    dopt.sample = config.sample;
    EstimatorSpec g2g3;
    g2g3.statistic = config.statistic;
    g2g3.anchor = Relative::Father;
    g2g3.pair = PairType::PaternalGrandfather;

    parallel_for(draws.size(), [&](std::size_t rep) {
        GeneratorConfig gen;
        gen.seed = derive_key(derive_key(config.seed ^ kRecoveryKey, cell_key), rep);
        gen.paternal_line_only = true;
        gen.with_earnings = false;
        gen.shocks = config.shocks;
        RegionParams region;
        region.region_id = 1;
        region.n_lineages = n;
        region.schooling.rho = rho;
        region.schooling.lambda = lambda;
        region.schooling.missing_rates[index_of(Relative::Father)] = config.missing_rate;
        region.schooling.missing_rates[index_of(Relative::PaternalGrandfather)] = config.missing_rate;
        gen.regions.push_back(region);
        const auto records = generate_population(gen);

        Draw& d = draws[rep];
        try {
            d.test = delta_test(records, dopt);
            LatentInputs in;
            in.region_id = 1;
            in.beta1_g1g2 = d.test.beta1;
            in.beta1_g2g3 = estimate_region(records, g2g3, {}).beta;
            in.beta2 = d.test.beta2;
            in.n_grandparent_pairs = d.test.n_grandparent_pairs;
            d.latent = recover_latent(in);
            d.ok = !d.test.flagged;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
        }
    });

    const double true_delta = implied_delta(rho, lambda);
    std::vector<double> b1, b2, dl, lh, rh, var;
    int covered = 0, two = 0, one = 0, tested = 0;
    for (const Draw& d : draws) {
        if (!d.ok) continue;
        ++tested;
        b1.push_back(d.test.beta1);
        b2.push_back(d.test.beta2);
        dl.push_back(d.test.delta);
        var.push_back(d.test.var_delta);
        const double se = std::sqrt(d.test.var_delta);
        if (std::abs(d.test.delta - true_delta) / se < 1.96) ++covered;
        if (std::abs(d.test.t_stat) > 1.96) ++two;
        if (d.test.t_stat > 1.6448536269514722) ++one;
        if (d.latent.valid) {
            lh.push_back(d.latent.lambda_hat);
            rh.push_back(d.latent.rho_hat);
        } else {
            ++cell.invalid;
        }
    }
    cell.invalid += config.replicates - tested;
    // Every generation has unit variance, so slopes and correlations share
    // the same population moments.
    cell.beta1 = summarise(b1, implied_beta1(rho, lambda));
    cell.beta2 = summarise(b2, implied_beta2(rho, lambda));
    cell.delta = summarise(dl, true_delta);
    cell.lambda_hat = summarise(lh, lambda);
    cell.rho_hat = summarise(rh, rho);
    if (tested > 0) {
        cell.mean_var_delta = mean(var);
        cell.coverage = static_cast<double>(covered) / tested;
        cell.rejection_two_sided = static_cast<double>(two) / tested;
        cell.rejection_one_sided = static_cast<double>(one) / tested;
    }
    if (dl.size() >= 2) cell.empirical_var_delta = cell.delta.sd * cell.delta.sd;
    if (lh.size() >= 3) {
        try {
            cell.corr_rho_lambda = pearson(rh, lh);
        } catch (const Error&) {
        }
    }
    return cell;
}

std::vector<RecoveryCell> recovery_experiment(const RecoveryConfig& config) {
    validate(config);
    std::vector<RecoveryCell> cells;
    std::uint64_t key = 0;
    for (std::size_t n : config.sizes)
        for (double rho : config.rhos)
            for (double lambda : config.lambdas) cells.push_back(run_recovery_cell(config, rho, lambda, n, key++));
    return cells;
}

}  // namespace mobilab
