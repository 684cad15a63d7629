#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mobilab {

enum class CovarianceType { Classical, HC1, Cluster };

struct RegressionResult {
    std::vector<std::string> names;  // "const" first when an intercept is present
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd se;
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    double adj_r2 = 0.0;
    std::size_t n = 0;
    double condition_number = 1.0;
    std::vector<std::string> warnings;

    double coefficient(const std::string& name) const;
    double std_error(const std::string& name) const;
};

struct RegressionOptions {
    CovarianceType covariance = CovarianceType::HC1;
    std::span<const int> clusters = {};  // required for CovarianceType::Cluster
    double condition_warning = 1e8;
};

// Weighted least squares of y on [1, X]. Empty weights means OLS. Weights are
// analytic: the point estimates and the robust covariance are invariant to
// rescaling them.
RegressionResult weighted_least_squares(const Eigen::MatrixXd& regressors,
                                        std::span<const double> y,
                                        std::span<const double> weights,
                                        std::vector<std::string> names,
                                        const RegressionOptions& options = {});

// Bivariate OLS with an intercept and HC1 standard errors. This is the
// per-region workhorse, so it avoids the dense machinery above.
struct SimpleFit {
    double alpha = 0.0;
    double beta = 0.0;
    double se_beta = 0.0;  // HC1
    double correlation = 0.0;
    double r2 = 0.0;
    double sd_x = 0.0;
    double sd_y = 0.0;
    std::size_t n = 0;
};
SimpleFit simple_regression(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> x);
double weighted_mean(std::span<const double> x, std::span<const double> w);
// Analytic-weight standard deviation, rescaled so equal weights give the
// usual n-1 sample standard deviation.
double weighted_sd(std::span<const double> x, std::span<const double> w);
double pearson(std::span<const double> x, std::span<const double> y);
double weighted_pearson(std::span<const double> x, std::span<const double> y,
                        std::span<const double> w);
// Type-7 (linear interpolation) empirical quantile; sorts a copy.
double quantile(std::span<const double> x, double p);
double median(std::span<const double> x);

// Two-sided p-values.
double normal_two_sided_p(double z);
double student_t_two_sided_p(double t, double dof);

}  // namespace mobilab
