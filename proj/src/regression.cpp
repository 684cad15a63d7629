#include "mobilab/regression.hpp"

#include "mobilab/common.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mobilab {

namespace {

std::size_t name_index(const std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw analysis_error("no regression coefficient named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

double RegressionResult::coefficient(const std::string& name) const {
    return coef(static_cast<Eigen::Index>(name_index(names, name)));
}

double RegressionResult::std_error(const std::string& name) const {
    return se(static_cast<Eigen::Index>(name_index(names, name)));
}

RegressionResult weighted_least_squares(const Eigen::MatrixXd& regressors,
                                        std::span<const double> y,
                                        std::span<const double> weights,
                                        std::vector<std::string> names,
                                        const RegressionOptions& options) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (regressors.rows() != n) throw analysis_error("regressor rows do not match outcome length");
    if (!weights.empty() && weights.size() != y.size())
        throw analysis_error("weight vector length does not match outcome length");
    const Eigen::Index k = regressors.cols() + 1;
    if (n < k) throw analysis_error("fewer observations than regression parameters");
    if (names.size() != static_cast<std::size_t>(regressors.cols()))
        throw analysis_error("regressor name count does not match columns");

    Eigen::MatrixXd X(n, k);
    X.col(0).setOnes();
    X.rightCols(regressors.cols()) = regressors;
    Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    Eigen::VectorXd W = weights.empty() ? Eigen::VectorXd::Ones(n)
                                        : Eigen::Map<const Eigen::VectorXd>(weights.data(), n).eval();
    if ((W.array() < 0.0).any()) throw analysis_error("negative regression weight");

    RegressionResult out;
    out.names.reserve(static_cast<std::size_t>(k));
    out.names.emplace_back("const");
    for (auto& s : names) out.names.push_back(std::move(s));
    out.n = static_cast<std::size_t>(n);

    const Eigen::VectorXd sw = W.array().sqrt();
    const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    const Eigen::VectorXd Yw = sw.asDiagonal() * Y;

    // Condition number of the column-equilibrated weighted design.
    Eigen::VectorXd scale = Xw.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < k; ++j)
        if (scale(j) == 0.0) scale(j) = 1.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xw * scale.cwiseInverse().asDiagonal());
    const auto& sv = svd.singularValues();
    out.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                   : std::numeric_limits<double>::infinity();
    if (out.condition_number > options.condition_warning)
        out.warnings.push_back("ill-conditioned design (condition number " +
                               std::to_string(out.condition_number) + ")");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    if (qr.rank() < k) out.warnings.push_back("collinear regressors: design rank deficient");
    out.coef = qr.solve(Yw);
    out.residuals = Y - X * out.coef;

    const double wsum = W.sum();
    const double ybar = W.dot(Y) / wsum;
    const double tss = (W.array() * (Y.array() - ybar).square()).sum();
    const double rss = (W.array() * out.residuals.array().square()).sum();
    out.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    out.adj_r2 = n > k ? 1.0 - (1.0 - out.r2) * (nd - 1.0) / (nd - kd) : out.r2;

    const Eigen::MatrixXd bread = (Xw.transpose() * Xw).completeOrthogonalDecomposition().pseudoInverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    switch (options.covariance) {
        case CovarianceType::Classical: {
            // Analytic weights normalised to sum to n.
            const double sigma2 = rss * (nd / wsum) / (nd - kd);
            out.vcov = bread * (wsum / nd) * sigma2;
            break;
        }
        case CovarianceType::HC1: {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double s = W(i) * out.residuals(i);
                meat.noalias() += (s * s) * X.row(i).transpose() * X.row(i);
            }
            out.vcov = bread * meat * bread * (nd / (nd - kd));
            break;
        }
        case CovarianceType::Cluster: {
            if (options.clusters.size() != y.size())
                throw analysis_error("cluster ids required for cluster-robust covariance");
            std::map<int, Eigen::VectorXd> scores;
            for (Eigen::Index i = 0; i < n; ++i) {
                auto [it, inserted] = scores.try_emplace(options.clusters[static_cast<std::size_t>(i)],
                                                         Eigen::VectorXd::Zero(k));
                it->second.noalias() += (W(i) * out.residuals(i)) * X.row(i).transpose();
            }
            const double g = static_cast<double>(scores.size());
            if (g < 2) throw analysis_error("cluster-robust covariance needs at least two clusters");
            for (const auto& [id, s] : scores) meat.noalias() += s * s.transpose();
            out.vcov = bread * meat * bread * (g / (g - 1.0)) * ((nd - 1.0) / (nd - kd));
            break;
        }
    }
    out.se = out.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

SimpleFit simple_regression(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw analysis_error("pair vectors differ in length");
    SimpleFit f;
    f.n = x.size();
    if (f.n < 2) throw analysis_error("at least two pairs are required");
    const double nd = static_cast<double>(f.n);
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < f.n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0)) throw analysis_error("zero variance in regressor: slope undefined");
    f.beta = sxy / sxx;
    f.alpha = my - f.beta * mx;
    f.sd_x = std::sqrt(sxx / (nd - 1.0));
    f.sd_y = std::sqrt(syy / (nd - 1.0));
    f.correlation = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
    f.r2 = f.correlation * f.correlation;
    if (f.n > 2) {
        double meat = 0.0;
        for (std::size_t i = 0; i < f.n; ++i) {
            const double dx = x[i] - mx;
            const double e = y[i] - f.alpha - f.beta * x[i];
            meat += dx * dx * e * e;
        }
        f.se_beta = std::sqrt(meat / (sxx * sxx) * nd / (nd - 2.0));
    }
    return f;
}

double mean(std::span<const double> x) {
    if (x.empty()) return kMissing;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double weighted_mean(std::span<const double> x, std::span<const double> w) {
    if (w.empty()) return mean(x);
    double sw = 0.0, swx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        swx += w[i] * x[i];
    }
    return sw > 0.0 ? swx / sw : kMissing;
}

double weighted_sd(std::span<const double> x, std::span<const double> w) {
    const std::size_t n = x.size();
    if (n < 2) return kMissing;
    const double m = weighted_mean(x, w);
    double sw = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sw += wi;
        ss += wi * (x[i] - m) * (x[i] - m);
    }
    const double nd = static_cast<double>(n);
    return std::sqrt(ss / sw * nd / (nd - 1.0));
}

double pearson(std::span<const double> x, std::span<const double> y) {
    return weighted_pearson(x, y, {});
}

double weighted_pearson(std::span<const double> x, std::span<const double> y,
                        std::span<const double> w) {
    if (x.size() != y.size() || (!w.empty() && w.size() != x.size()))
        throw analysis_error("correlation inputs differ in length");
    if (x.size() < 2) throw analysis_error("correlation needs at least two observations");
    const double mx = weighted_mean(x, w);
    const double my = weighted_mean(y, w);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += wi * dx * dx;
        syy += wi * dy * dy;
        sxy += wi * dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw analysis_error("correlation undefined: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double quantile(std::span<const double> x, double p) {
    if (x.empty()) return kMissing;
    std::vector<double> v(x.begin(), x.end());
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) return kMissing;
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace mobilab
