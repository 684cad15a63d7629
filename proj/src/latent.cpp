#include "mobilab/latent.hpp"

#include "mobilab/parallel.hpp"

#include <cmath>

namespace mobilab {

void finish_delta_test(DeltaTest& t) {
    t.delta = t.beta2 - t.beta1 * t.beta1;
    t.var_delta = delta_variance(t.beta1, t.var_beta1, t.var_beta2, t.cov_b1b2);
    if (!(t.var_delta > 0.0) || !std::isfinite(t.var_delta)) {
        t.flagged = true;
        t.flag_reason = "degenerate joint covariance";
        t.var_delta = std::max(0.0, t.var_delta);
        t.t_stat = kMissing;
        t.p_two_sided = kMissing;
        t.p_one_sided = kMissing;
        return;
    }
    t.t_stat = t.delta / std::sqrt(t.var_delta);
    t.p_two_sided = normal_two_sided_p(t.t_stat);
    t.p_one_sided = 0.5 * std::erfc(t.t_stat / std::sqrt(2.0));
}

DeltaTest delta_test(std::span<const LineageRecord> records, const DeltaOptions& options,
                     const OutcomeContext& ctx) {
    DeltaTest test;
    test.region_id = records.empty() ? 0 : records.front().region_id;

    // Observation slots per equation; -1 marks lineages absent from it.
    std::vector<double> x1, y1, x2, y2;
    std::vector<std::ptrdiff_t> slot1, slot2;
    slot1.reserve(records.size());
    slot2.reserve(records.size());
    for (const auto& rec : records) {
        std::ptrdiff_t s1 = -1, s2 = -1;
        if (passes_gender(rec, options.gender)) {
            const double y = outcome_value(rec, Relative::Child, options.outcome, ctx);
            const double p = pair_value(rec, options.parent, options.outcome, ctx);
            const double g = pair_value(rec, options.grandparent, options.outcome, ctx);
            const bool has1 = present(y) && present(p);
            const bool has2 = present(y) && present(g);
            const bool keep1 = options.sample == SurSample::Union ? has1 : has1 && has2;
            const bool keep2 = options.sample == SurSample::Union ? has2 : has1 && has2;
            if (keep1) {
                s1 = static_cast<std::ptrdiff_t>(x1.size());
                x1.push_back(p);
                y1.push_back(y);
            }
            if (keep2) {
                s2 = static_cast<std::ptrdiff_t>(x2.size());
                x2.push_back(g);
                y2.push_back(y);
            }
        }
        slot1.push_back(s1);
        slot2.push_back(s2);
    }
    test.n_parent_pairs = x1.size();
    test.n_grandparent_pairs = x2.size();
    if (x1.size() < 3 || x2.size() < 3)
        throw analysis_error("region " + std::to_string(test.region_id) +
                             ": fewer than three parent or grandparent pairs for the delta test");

    const InfluenceFit f1 = influence_fit(x1, y1, options.statistic);
    const InfluenceFit f2 = influence_fit(x2, y2, options.statistic);
    test.beta1 = f1.beta;
    test.beta2 = f2.beta;
    test.var_beta1 = f1.variance();
    test.var_beta2 = f2.variance();

    double cross = 0.0;
    for (std::size_t i = 0; i < slot1.size(); ++i) {
        if (slot1[i] < 0 || slot2[i] < 0) continue;
        cross += f1.psi[static_cast<std::size_t>(slot1[i])] * f2.psi[static_cast<std::size_t>(slot2[i])];
        ++test.n_common;
    }
    const double n1 = static_cast<double>(x1.size()), n2 = static_cast<double>(x2.size());
    test.cov_b1b2 = std::sqrt(f1.dof_factor * f2.dof_factor) * cross / (n1 * n2);
    finish_delta_test(test);
    return test;
}

std::vector<DeltaTest> delta_tests_by_region(const RegionGroups& groups, const DeltaOptions& options,
                                             const OutcomeContext& ctx) {
    std::vector<DeltaTest> out(groups.ids.size());
    parallel_for(groups.ids.size(), [&](std::size_t i) {
        try {
            out[i] = delta_test(groups.records[i], options, ctx);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
            out[i].flagged = true;
            out[i].flag_reason = e.what();
        }
        out[i].region_id = groups.ids[i];
    });
    return out;
}

RejectShares reject_shares(std::span<const DeltaTest> tests, std::span<const double> weights) {
    if (!weights.empty() && weights.size() != tests.size())
        throw config_error("reject_shares: weights and tests differ in length");
    RejectShares s;
    double n = 0.0, w_total = 0.0;
    double pos = 0.0, pos_w = 0.0, above = 0.0, above_w = 0.0, two = 0.0, two_w = 0.0, one = 0.0, one_w = 0.0;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const DeltaTest& t = tests[i];
        if (t.flagged || !present(t.t_stat)) continue;
        const double w = weights.empty() ? static_cast<double>(t.n_grandparent_pairs) : weights[i];
        n += 1.0;
        w_total += w;
        auto add = [&](bool hit, double& unweighted, double& weighted) {
            if (!hit) return;
            unweighted += 1.0;
            weighted += w;
        };
        add(t.delta > 0.0, pos, pos_w);
        add(t.t_stat > 1.96, above, above_w);
        add(std::abs(t.t_stat) > 1.96, two, two_w);
        add(t.t_stat > 1.6448536269514722, one, one_w);
    }
    s.regions = static_cast<std::size_t>(n);
    if (n == 0.0) return s;
    s.delta_positive = pos / n;
    s.t_above = above / n;
    s.two_sided = two / n;
    s.one_sided = one / n;
    if (w_total > 0.0) {
        s.delta_positive_weighted = pos_w / w_total;
        s.t_above_weighted = above_w / w_total;
        s.two_sided_weighted = two_w / w_total;
        s.one_sided_weighted = one_w / w_total;
    }
    return s;
}

LatentEstimate recover_latent(const LatentInputs& in) {
    LatentEstimate est;
    est.region_id = in.region_id;
    est.beta2 = in.beta2;
    est.n_grandparent_pairs = in.n_grandparent_pairs;
    const double b_up = present(in.beta1_g2g3) ? in.beta1_g2g3 : in.beta1_g1g2;
    if (!present(in.beta1_g1g2) || !present(in.beta2)) {
        est.reason = "missing input statistic";
        return est;
    }
    if (!(in.beta1_g1g2 > 0.0) || !(b_up > 0.0)) {
        est.reason = "non-positive intergenerational statistic";
        return est;
    }
    est.beta1_adj = std::sqrt(in.beta1_g1g2 * b_up);
    if (!(in.beta2 > 0.0)) {
        est.reason = "non-positive multigenerational statistic";
        return est;
    }
    est.lambda_hat = in.beta2 / est.beta1_adj;
    est.rho_hat = std::sqrt(est.beta1_adj * est.beta1_adj / in.beta2);
    if (est.lambda_hat > kLatentGuardrail) {
        est.reason = "lambda_hat above guardrail";
        return est;
    }
    if (est.rho_hat > kLatentGuardrail) {
        est.reason = "rho_hat above guardrail";
        return est;
    }
    est.valid = true;
    return est;
}

std::vector<LatentEstimate> latent_by_region(const RegionGroups& groups, const LatentOptions& options,
                                             const OutcomeContext& ctx) {
    EstimatorSpec base;
    base.outcome = options.outcome;
    base.statistic = options.statistic;
    base.balanced = options.balanced;
    base.gender = options.gender;

    EstimatorSpec g1g2 = base;
    g1g2.pair = PairType::Father;
    EstimatorSpec g1g3 = base;
    g1g3.pair = PairType::PaternalGrandfather;
    EstimatorSpec g2g3 = base;
    g2g3.anchor = Relative::Father;
    g2g3.pair = PairType::PaternalGrandfather;

    std::vector<LatentEstimate> out(groups.ids.size());
    parallel_for(groups.ids.size(), [&](std::size_t i) {
        const auto& recs = groups.records[i];
        LatentInputs in;
        in.region_id = groups.ids[i];
        try {
            in.beta1_g1g2 = estimate_region(recs, g1g2, ctx).beta;
            const MobilityEstimate m2 = estimate_region(recs, g1g3, ctx);
            in.beta2 = m2.beta;
            in.n_grandparent_pairs = m2.n_pairs;
            if (options.use_g2g3) in.beta1_g2g3 = estimate_region(recs, g2g3, ctx).beta;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
            out[i].region_id = in.region_id;
            out[i].reason = e.what();
            return;
        }
        out[i] = recover_latent(in);
    });
    return out;
}

Eigen::MatrixXd latent_design(std::span<const LatentEstimate> estimates, LatentRegressors regressors,
                              bool log_mode, std::vector<std::string>& names) {
    names.clear();
    const bool rho = regressors != LatentRegressors::Lambda;
    const bool lambda = regressors != LatentRegressors::Rho;
    if (rho) names.push_back(log_mode ? "log_rho_hat" : "rho_hat");
    if (lambda) names.push_back(log_mode ? "log_lambda_hat" : "lambda_hat");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(estimates.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        Eigen::Index c = 0;
        const auto row = static_cast<Eigen::Index>(i);
        if (rho) X(row, c++) = log_mode ? std::log(estimates[i].rho_hat) : estimates[i].rho_hat;
        if (lambda) X(row, c++) = log_mode ? std::log(estimates[i].lambda_hat) : estimates[i].lambda_hat;
    }
    return X;
}

RegressionResult latent_regression(std::span<const LatentEstimate> estimates, LatentRegressors regressors,
                                   bool log_mode, const RegressionOptions& options, bool weighted) {
    if (!options.clusters.empty() && options.clusters.size() != estimates.size())
        throw config_error("latent regression: one cluster per region estimate required");
    std::vector<LatentEstimate> valid;
    std::vector<int> clusters;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!estimates[i].valid) continue;
        valid.push_back(estimates[i]);
        if (!options.clusters.empty()) clusters.push_back(options.clusters[i]);
    }
    if (valid.size() < 3) throw analysis_error("latent regression needs at least three valid regions");
    std::vector<double> y, w;
    for (const auto& e : valid) {
        y.push_back(log_mode ? std::log(e.beta2) : e.beta2);
        w.push_back(static_cast<double>(e.n_grandparent_pairs));
    }
    std::vector<std::string> names;
    const Eigen::MatrixXd X = latent_design(valid, regressors, log_mode, names);
    RegressionOptions opt = options;
    opt.clusters = clusters;
    if (!weighted) w.clear();
    return weighted_least_squares(X, y, w, std::move(names), opt);
}

}  // namespace mobilab
