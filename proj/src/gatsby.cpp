#include "mobilab/gatsby.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mobilab {

double gini(std::span<const double> values, std::span<const double> weights) {
    if (values.empty()) throw analysis_error("Gini of an empty sample");
    if (!weights.empty() && weights.size() != values.size())
        throw config_error("Gini: weights and values differ in length");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0)) throw validation_error("Gini requires non-negative values");
        if (!weights.empty() && !(weights[i] >= 0.0)) throw validation_error("Gini requires non-negative weights");
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
    double total_w = 0.0, total_x = 0.0;
    for (std::size_t i : order) {
        total_w += w(i);
        total_x += w(i) * values[i];
    }
    if (!(total_x > 0.0)) throw analysis_error("Gini undefined when all values are zero");
    // Sum of w_i x_i (2 F_i - 1), F_i the mid-point of the cumulative weight share.
    double acc = 0.0, cum = 0.0;
    for (std::size_t i : order) {
        const double f = (cum + 0.5 * w(i)) / total_w;
        acc += w(i) * values[i] * (2.0 * f - 1.0);
        cum += w(i);
    }
    return acc / total_x;
}

std::vector<InequalityMeasure> inequality_by_region(const RegionGroups& groups,
                                                    InequalityGeneration generation) {
    const Relative who =
        generation == InequalityGeneration::Father ? Relative::Father : Relative::PaternalGrandfather;
    std::vector<InequalityMeasure> out;
    out.reserve(groups.ids.size());
    for (std::size_t r = 0; r < groups.ids.size(); ++r) {
        InequalityMeasure m;
        m.region_id = groups.ids[r];
        m.generation = generation;
        std::vector<double> logs, levels;
        for (const auto& rec : groups.records[r]) {
            const double v = rec.at(who).log_earnings;
            if (!present(v)) continue;
            logs.push_back(v);
            levels.push_back(std::exp(v));
        }
        m.n = logs.size();
        if (m.n >= 2) {
            m.gini = gini(levels);
            m.sd_log = weighted_sd(logs, {});
        }
        out.push_back(m);
    }
    return out;
}

namespace {

std::vector<double> residualise(std::span<const double> y, std::span<const double> size,
                                std::span<const double> weights) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(size.size()), 1);
    for (std::size_t i = 0; i < size.size(); ++i) X(static_cast<Eigen::Index>(i), 0) = size[i];
    RegressionOptions opt;
    opt.covariance = CovarianceType::Classical;
    const RegressionResult fit = weighted_least_squares(X, y, weights, {"size"}, opt);
    return {fit.residuals.data(), fit.residuals.data() + fit.residuals.size()};
}

}  // namespace

GatsbyResult gatsby_correlation(std::span<const double> statistic, std::span<const double> inequality,
                                std::span<const double> weights, std::span<const double> sizes,
                                bool size_control) {
    const std::size_t n = statistic.size();
    if (inequality.size() != n || (!weights.empty() && weights.size() != n) ||
        (size_control && sizes.size() != n))
        throw config_error("Gatsby series differ in length");
    if (n < 3) throw analysis_error("Gatsby correlation needs at least three regions");
    GatsbyResult res;
    res.weighted = !weights.empty();
    res.size_controlled = size_control;
    res.regions = n;
    const std::vector<double> ones(n, 1.0);
    std::span<const double> w = weights.empty() ? std::span<const double>(ones) : weights;
    if (size_control) {
        const auto a = residualise(statistic, sizes, w);
        const auto b = residualise(inequality, sizes, w);
        res.correlation = weighted_pearson(a, b, w);
    } else {
        res.correlation = weighted_pearson(statistic, inequality, w);
    }
    const double dof = static_cast<double>(n) - (size_control ? 3.0 : 2.0);
    const double r = std::clamp(res.correlation, -1.0, 1.0);
    if (dof <= 0.0) return res;
    if (std::abs(r) >= 1.0) {
        res.p_value = 0.0;
    } else {
        res.p_value = student_t_two_sided_p(r * std::sqrt(dof / (1.0 - r * r)), dof);
    }
    return res;
}

GatsbyResult gatsby_correlation(std::span<const MobilityEstimate> mobility,
                                std::span<const InequalityMeasure> inequality, const GatsbyOptions& options) {
    std::map<std::uint32_t, double> ineq;
    for (const auto& m : inequality)
        if (present(m.gini)) ineq[m.region_id] = m.gini;
    std::vector<double> stat, gin, w, size;
    for (const auto& e : mobility) {
        if (e.flagged || e.n_pairs < options.min_pairs || !present(e.beta)) continue;
        auto it = ineq.find(e.region_id);
        if (it == ineq.end()) continue;
        stat.push_back(e.beta);
        gin.push_back(it->second);
        w.push_back(static_cast<double>(e.n_pairs));
        size.push_back(static_cast<double>(e.n_pairs));
    }
    GatsbyResult res = gatsby_correlation(stat, gin, options.weighted ? std::span<const double>(w)
                                                                        : std::span<const double>(),
                                          size, options.size_control);
    if (!mobility.empty()) res.label = mobility.front().spec.label();
    return res;
}

RegressionResult latent_inequality_regression(std::span<const InequalityMeasure> inequality,
                                              std::span<const LatentEstimate> latent,
                                              LatentRegressors regressors, const RegressionOptions& options,
                                              bool weighted) {
    std::map<std::uint32_t, double> ineq;
    for (const auto& m : inequality)
        if (present(m.gini)) ineq[m.region_id] = m.gini;
    std::vector<LatentEstimate> rows;
    std::vector<double> y, w;
    for (const auto& e : latent) {
        if (!e.valid) continue;
        auto it = ineq.find(e.region_id);
        if (it == ineq.end()) continue;
        rows.push_back(e);
        y.push_back(it->second);
        w.push_back(static_cast<double>(e.n_grandparent_pairs));
    }
    if (rows.size() < 3) throw analysis_error("inequality regression needs at least three valid regions");
    if (!options.clusters.empty())
        throw config_error("inequality regression takes no cluster vector; use HC1 or classical");
    std::vector<std::string> names;
    const Eigen::MatrixXd X = latent_design(rows, regressors, false, names);
    if (!weighted) w.clear();
    return weighted_least_squares(X, y, w, std::move(names), options);
}

}  // namespace mobilab
