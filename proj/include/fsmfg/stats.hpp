#pragma once
// Small statistics toolkit for the law checks and rate fits: moments,
// percentiles, a Kolmogorov-Smirnov test against an exponential, a pooled
// two-sample chi-square, and log-log slope fitting.

#include <vector>

#include "fsmfg/common.hpp"

namespace mfg::stats {

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);
// sd / sqrt(count)
double standard_error(const std::vector<double>& v);
// p in [0, 1]; linear interpolation between order statistics
double percentile(std::vector<double> v, double p);

Vec mean_vec(const std::vector<Vec>& samples);
// unbiased sample covariance, d x d
std::vector<Vec> covariance(const std::vector<Vec>& samples);

// Regularized upper incomplete gamma Q(a, x) (series for x < a+1, continued
// fraction otherwise).
double gammq(double a, double x);

struct KsResult {
    double statistic = 0.0;  // sup |F_emp - F|
    double p_value = 1.0;
};
// One-sample KS against Exponential(rate), asymptotic Kolmogorov p-value
// with the usual small-sample correction.
KsResult ks_exponential(std::vector<double> samples, double rate);

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};
// Two-sample chi-square on integer-valued observations (e.g. event counts
// per run). Values are binned and adjacent bins pooled left-to-right until
// every expected cell count reaches min_expected.
ChiSquareResult chi_square_counts(const std::vector<long long>& sample1,
                                  const std::vector<long long>& sample2,
                                  double min_expected = 5.0);

// Least-squares slope of log(y) against log(x); x and y must be positive.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mfg::stats
