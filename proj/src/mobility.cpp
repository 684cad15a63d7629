#include "mobilab/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mobilab {

namespace {

constexpr std::array<std::string_view, 4> kOutcomeNames{"schooling_years", "earnings_rank",
                                                        "log_earnings", "binary_education"};
constexpr std::array<std::string_view, 2> kStatisticNames{"regression_slope", "pearson_correlation"};
constexpr std::array<std::string_view, 8> kPairNames{
    "father",
    "mother",
    "parental_average",
    "paternal_grandfather",
    "maternal_grandfather",
    "paternal_grandmother",
    "maternal_grandmother",
    "grandparental_average",
};
constexpr std::array<std::string_view, 2> kWeightingNames{"unweighted", "pair_count"};
constexpr std::array<std::string_view, 3> kGenderFilterNames{"all", "sons", "daughters"};

template <class E, std::size_t N>
std::optional<E> parse_enum(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<E>(i);
    return std::nullopt;
}

std::optional<Relative> single_relative(PairType p) {
    switch (p) {
        case PairType::Father: return Relative::Father;
        case PairType::Mother: return Relative::Mother;
        case PairType::PaternalGrandfather: return Relative::PaternalGrandfather;
        case PairType::MaternalGrandfather: return Relative::MaternalGrandfather;
        case PairType::PaternalGrandmother: return Relative::PaternalGrandmother;
        case PairType::MaternalGrandmother: return Relative::MaternalGrandmother;
        default: return std::nullopt;
    }
}

GenerationalAverage average_of(const LineageRecord& rec, int generation, OutcomeKind outcome,
                               const OutcomeContext& ctx) {
    GenerationalAverage avg;
    double sum = 0.0;
    for (Relative r : kAllRelatives) {
        if (generation_of(r) != generation) continue;
        const double v = outcome_value(rec, r, outcome, ctx);
        if (!present(v)) continue;
        sum += v;
        ++avg.contributors;
    }
    if (avg.contributors > 0) avg.value = sum / avg.contributors;
    return avg;
}

}  // namespace

double pair_value(const LineageRecord& rec, PairType p, OutcomeKind outcome, const OutcomeContext& ctx) {
    if (auto r = single_relative(p)) return outcome_value(rec, *r, outcome, ctx);
    return average_of(rec, p == PairType::ParentalAverage ? 1 : 2, outcome, ctx).value;
}

bool passes_gender(const LineageRecord& rec, GenderFilter g) {
    switch (g) {
        case GenderFilter::All: return true;
        case GenderFilter::Sons: return rec.child_gender == Gender::Male;
        case GenderFilter::Daughters: return rec.child_gender == Gender::Female;
    }
    return true;
}

double InfluenceFit::variance() const {
    const double n = static_cast<double>(psi.size());
    double ss = 0.0;
    for (double v : psi) ss += v * v;
    return dof_factor * ss / (n * n);
}

InfluenceFit influence_fit(std::span<const double> x, std::span<const double> y, Statistic statistic) {
    if (x.size() != y.size()) throw analysis_error("pair vectors differ in length");
    const std::size_t n = x.size();
    if (n < 3) throw analysis_error("fewer than three pairs");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0)) throw analysis_error("regressor has no variance");
    const double nn = static_cast<double>(n);
    InfluenceFit fit;
    fit.dof_factor = nn / (nn - 2.0);
    fit.psi.resize(n);
    if (statistic == Statistic::RegressionSlope) {
        fit.beta = sxy / sxx;
        fit.alpha = my - fit.beta * mx;
        fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
        const double vx = sxx / nn;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = x[i] - mx;
            const double e = y[i] - fit.alpha - fit.beta * x[i];
            fit.psi[i] = dx * e / vx;
        }
    } else {
        fit.alpha = 0.0;
        if (!(syy > 0.0)) {
            // No variation in the outcome: the correlation is taken as zero
            // with zero sampling variance.
            fit.beta = 0.0;
            fit.r2 = 0.0;
            std::fill(fit.psi.begin(), fit.psi.end(), 0.0);
            return fit;
        }
        const double r = sxy / std::sqrt(sxx * syy);
        fit.beta = r;
        fit.r2 = r * r;
        const double sx = std::sqrt(sxx / nn), sy = std::sqrt(syy / nn);
        for (std::size_t i = 0; i < n; ++i) {
            const double zx = (x[i] - mx) / sx, zy = (y[i] - my) / sy;
            fit.psi[i] = zx * zy - 0.5 * r * (zx * zx + zy * zy);
        }
    }
    return fit;
}

std::string_view to_string(OutcomeKind o) { return kOutcomeNames[static_cast<std::size_t>(o)]; }
std::string_view to_string(Statistic s) { return kStatisticNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(PairType p) { return kPairNames[static_cast<std::size_t>(p)]; }
std::string_view to_string(Weighting w) { return kWeightingNames[static_cast<std::size_t>(w)]; }
std::string_view to_string(GenderFilter g) { return kGenderFilterNames[static_cast<std::size_t>(g)]; }
std::optional<OutcomeKind> parse_outcome(std::string_view s) { return parse_enum<OutcomeKind>(kOutcomeNames, s); }
std::optional<Statistic> parse_statistic(std::string_view s) { return parse_enum<Statistic>(kStatisticNames, s); }
std::optional<PairType> parse_pair(std::string_view s) { return parse_enum<PairType>(kPairNames, s); }
std::optional<GenderFilter> parse_gender_filter(std::string_view s) {
    return parse_enum<GenderFilter>(kGenderFilterNames, s);
}

std::string EstimatorSpec::label() const {
    std::string s;
    s += to_string(outcome);
    s += ':';
    s += to_string(statistic);
    s += ':';
    if (anchor != Relative::Child) {
        s += to_string(anchor);
        s += '-';
    }
    s += to_string(pair);
    s += ':';
    s += to_string(gender);
    if (balanced) s += ":balanced";
    return s;
}

OutcomeContext make_outcome_context(std::span<const LineageRecord> records) {
    OutcomeContext ctx;
    for (int g = 0; g < 3; ++g) {
        std::vector<double> v;
        for (const auto& rec : records)
            for (Relative r : kAllRelatives)
                if (generation_of(r) == g && present(rec.at(r).schooling)) v.push_back(rec.at(r).schooling);
        ctx.schooling_medians[static_cast<std::size_t>(g)] = median(v);
    }
    return ctx;
}

double outcome_value(const LineageRecord& rec, Relative r, OutcomeKind outcome, const OutcomeContext& ctx) {
    const auto& o = rec.at(r);
    switch (outcome) {
        case OutcomeKind::SchoolingYears: return o.schooling;
        case OutcomeKind::EarningsRank: return o.earnings_rank;
        case OutcomeKind::LogEarnings: return o.log_earnings;
        case OutcomeKind::BinaryEducation: {
            if (!present(o.schooling)) return kMissing;
            const double med = ctx.schooling_medians[static_cast<std::size_t>(generation_of(r))];
            if (!present(med)) throw analysis_error("binary education requires generation medians");
            return o.schooling > med ? 1.0 : 0.0;
        }
    }
    return kMissing;
}

std::vector<GenerationalAverage> generational_average(std::span<const LineageRecord> records, int generation,
                                                      OutcomeKind outcome, const OutcomeContext& ctx) {
    if (generation < 0 || generation > 2) throw config_error("generation must be 0, 1 or 2");
    std::vector<GenerationalAverage> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(average_of(rec, generation, outcome, ctx));
    return out;
}

PairSample collect_pairs(std::span<const LineageRecord> records, const EstimatorSpec& spec,
                         const OutcomeContext& ctx) {
    PairSample s;
    s.relative.reserve(records.size());
    s.anchor.reserve(records.size());
    for (const auto& rec : records) {
        if (!passes_gender(rec, spec.gender)) continue;
        if (spec.balanced) {
            if (!present(outcome_value(rec, Relative::Child, spec.outcome, ctx)) ||
                !present(outcome_value(rec, Relative::Father, spec.outcome, ctx)) ||
                !present(outcome_value(rec, Relative::PaternalGrandfather, spec.outcome, ctx)))
                continue;
        }
        const double y = outcome_value(rec, spec.anchor, spec.outcome, ctx);
        if (!present(y)) continue;
        const double x = pair_value(rec, spec.pair, spec.outcome, ctx);
        if (!present(x)) continue;
        s.relative.push_back(x);
        s.anchor.push_back(y);
    }
    return s;
}

MobilityEstimate estimate_region(std::span<const LineageRecord> records, const EstimatorSpec& spec,
                                 const OutcomeContext& ctx) {
    MobilityEstimate est;
    est.spec = spec;
    est.region_id = records.empty() ? 0 : records.front().region_id;
    const PairSample pairs = collect_pairs(records, spec, ctx);
    est.n_pairs = pairs.anchor.size();
    if (est.n_pairs < 3)
        throw analysis_error("region " + std::to_string(est.region_id) + ": fewer than three complete pairs for " +
                             spec.label());
    const InfluenceFit fit = influence_fit(pairs.relative, pairs.anchor, spec.statistic);
    est.alpha = fit.alpha;
    est.beta = fit.beta;
    est.se_beta = std::sqrt(fit.variance());
    est.r2 = fit.r2;
    return est;
}

MobilityEstimate estimate_region(std::span<const LineageRecord> records, const EstimatorSpec& spec) {
    return estimate_region(records, spec, make_outcome_context(records));
}

RegionGroups group_by_region(std::span<const LineageRecord> records) {
    std::map<std::uint32_t, std::vector<LineageRecord>> m;
    for (const auto& rec : records) m[rec.region_id].push_back(rec);
    RegionGroups g;
    for (auto& [id, recs] : m) {
        g.ids.push_back(id);
        g.records.push_back(std::move(recs));
    }
    return g;
}

std::vector<MobilityEstimate> estimate_by_region(const RegionGroups& groups, const EstimatorSpec& spec,
                                                 const OutcomeContext& ctx) {
    std::vector<MobilityEstimate> out(groups.ids.size());
    for (std::size_t i = 0; i < groups.ids.size(); ++i) {
        try {
            out[i] = estimate_region(groups.records[i], spec, ctx);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
            MobilityEstimate& est = out[i];
            est.spec = spec;
            est.flagged = true;
            est.flag_reason = e.what();
            est.n_pairs = collect_pairs(groups.records[i], spec, ctx).anchor.size();
        }
        out[i].region_id = groups.ids[i];
    }
    return out;
}

double p25_upward_mobility(const MobilityEstimate& estimate) {
    if (estimate.spec.outcome != OutcomeKind::EarningsRank ||
        estimate.spec.statistic != Statistic::RegressionSlope)
        throw config_error("P25 upward mobility requires a rank-rank regression slope, got " +
                           estimate.spec.label());
    return estimate.alpha + 0.25 * estimate.beta;
}

CefProfile cef_bins(std::span<const double> parent_rank, std::span<const double> child_rank, int n_bins,
                    const std::string& level) {
    if (n_bins < 1) throw config_error("CEF needs at least one bin");
    if (parent_rank.size() != child_rank.size()) throw analysis_error("CEF inputs differ in length");
    CefProfile prof;
    prof.level = level;
    prof.bins.resize(static_cast<std::size_t>(n_bins));
    std::vector<double> sums(static_cast<std::size_t>(n_bins), 0.0);
    for (int b = 0; b < n_bins; ++b) prof.bins[static_cast<std::size_t>(b)].center = (b + 0.5) / n_bins;
    for (std::size_t i = 0; i < parent_rank.size(); ++i) {
        const double p = parent_rank[i];
        if (!(p >= 0.0 && p <= 1.0)) throw validation_error("parent rank outside [0, 1]");
        const auto b = static_cast<std::size_t>(std::min(n_bins - 1, static_cast<int>(p * n_bins)));
        sums[b] += child_rank[i];
        ++prof.bins[b].n;
    }
    for (std::size_t b = 0; b < sums.size(); ++b)
        if (prof.bins[b].n > 0) prof.bins[b].mean = sums[b] / static_cast<double>(prof.bins[b].n);

    if (parent_rank.size() >= 4) {
        const SimpleFit lin = simple_regression(parent_rank, child_rank);
        Eigen::MatrixXd X(static_cast<Eigen::Index>(parent_rank.size()), 2);
        for (std::size_t i = 0; i < parent_rank.size(); ++i) {
            X(static_cast<Eigen::Index>(i), 0) = parent_rank[i];
            X(static_cast<Eigen::Index>(i), 1) = parent_rank[i] * parent_rank[i];
        }
        RegressionOptions opt;
        opt.covariance = CovarianceType::Classical;
        const auto quad = weighted_least_squares(X, child_rank, {}, {"rank", "rank2"}, opt);
        prof.r2_linear = lin.r2;
        prof.r2_quadratic = quad.r2;
        if (lin.r2 > 0.0) prof.linearity_index = std::max(0.0, quad.r2 / lin.r2 - 1.0);
    }
    return prof;
}

CefProfile cef_bins(std::span<const LineageRecord> records, const EstimatorSpec& spec, int n_bins,
                    const std::string& level, const OutcomeContext& ctx) {
    if (spec.outcome != OutcomeKind::EarningsRank) throw config_error("CEF bins require earnings ranks");
    const PairSample pairs = collect_pairs(records, spec, ctx);
    return cef_bins(pairs.relative, pairs.anchor, n_bins, level);
}

double mean_linearity_index(const RegionGroups& groups, const EstimatorSpec& spec, bool weighted,
                            std::size_t min_pairs, const OutcomeContext& ctx) {
    // Ratio of average R2s, so regions with a near-zero linear fit cannot
    // dominate the way they would in an average of per-region ratios.
    std::vector<double> lin, quad, w;
    for (std::size_t i = 0; i < groups.ids.size(); ++i) {
        const PairSample pairs = collect_pairs(groups.records[i], spec, ctx);
        if (pairs.anchor.size() < std::max<std::size_t>(min_pairs, 4)) continue;
        const CefProfile p = cef_bins(pairs.relative, pairs.anchor, 10, std::to_string(groups.ids[i]));
        if (!present(p.r2_linear) || !present(p.r2_quadratic)) continue;
        lin.push_back(p.r2_linear);
        quad.push_back(p.r2_quadratic);
        w.push_back(static_cast<double>(pairs.anchor.size()));
    }
    if (lin.empty()) throw analysis_error("no region supports a linearity index");
    const double ml = weighted ? weighted_mean(lin, w) : mean(lin);
    const double mq = weighted ? weighted_mean(quad, w) : mean(quad);
    if (!(ml > 0.0)) throw analysis_error("linear fits explain nothing on average");
    return std::max(0.0, mq / ml - 1.0);
}

CorrelationMatrix cross_measure_matrix(std::span<const StatisticSeries> series, std::size_t min_pairs) {
    if (series.empty()) throw config_error("cross-measure matrix needs at least one statistic");
    std::map<std::uint32_t, std::vector<const MobilityEstimate*>> by_region;
    for (std::size_t s = 0; s < series.size(); ++s)
        for (const auto& e : series[s].estimates) {
            auto& slot = by_region[e.region_id];
            slot.resize(series.size(), nullptr);
            slot[s] = &e;
        }
    CorrelationMatrix m;
    std::vector<std::vector<double>> cols(series.size());
    std::vector<double> weights;
    for (const auto& [id, ests] : by_region) {
        bool ok = ests.size() == series.size();
        std::size_t w = std::numeric_limits<std::size_t>::max();
        for (const auto* e : ests) {
            if (!e || e->flagged || e->n_pairs < min_pairs) {
                ok = false;
                break;
            }
            w = std::min(w, e->n_pairs);
        }
        if (!ok) continue;
        m.regions.push_back(id);
        weights.push_back(static_cast<double>(w));
        for (std::size_t s = 0; s < series.size(); ++s) cols[s].push_back(ests[s]->beta);
    }
    if (m.regions.size() < 2)
        throw analysis_error("cross-measure matrix needs at least two regions passing the size filter");
    for (const auto& s : series) m.names.push_back(s.name);
    m.values.assign(series.size(), std::vector<double>(series.size(), 1.0));
    for (std::size_t a = 0; a < series.size(); ++a)
        for (std::size_t b = a + 1; b < series.size(); ++b) {
            const double r = weighted_pearson(cols[a], cols[b], weights);
            m.values[a][b] = r;
            m.values[b][a] = r;
        }
    return m;
}

SeriesSummary summarize(std::span<const MobilityEstimate> estimates, std::size_t min_pairs) {
    std::vector<double> v, w;
    for (const auto& e : estimates) {
        if (e.flagged || e.n_pairs < min_pairs) continue;
        v.push_back(e.beta);
        w.push_back(static_cast<double>(e.n_pairs));
    }
    SeriesSummary s;
    s.regions = v.size();
    if (v.empty()) return s;
    s.mean_unweighted = mean(v);
    s.mean_weighted = weighted_mean(v, w);
    s.sd_unweighted = weighted_sd(v, {});
    s.sd_weighted = weighted_sd(v, w);
    return s;
}

}  // namespace mobilab
