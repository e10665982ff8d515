#include "fsmfg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mfg::stats {

double mean(const std::vector<double>& v) {
    if (v.empty()) throw InvalidInput("mean of empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) throw InvalidInput("sample sd needs at least 2 points");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

double standard_error(const std::vector<double>& v) {
    return sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw InvalidInput("percentile of empty sample");
    if (p < 0 || p > 1) throw InvalidInput("percentile level outside [0, 1]");
    std::sort(v.begin(), v.end());
    const double pos = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double w = pos - lo;
    return (1.0 - w) * v[lo] + w * v[lo + 1];
}

Vec mean_vec(const std::vector<Vec>& samples) {
    if (samples.empty()) throw InvalidInput("mean of empty sample");
    Vec m(samples.front().size(), 0.0);
    for (const Vec& s : samples)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += s[i];
    for (double& x : m) x /= samples.size();
    return m;
}

std::vector<Vec> covariance(const std::vector<Vec>& samples) {
    if (samples.size() < 2) throw InvalidInput("covariance needs at least 2 samples");
    const Vec m = mean_vec(samples);
    const std::size_t d = m.size();
    std::vector<Vec> cov(d, Vec(d, 0.0));
    for (const Vec& s : samples)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i][j] += (s[i] - m[i]) * (s[j] - m[j]);
    for (auto& row : cov)
        for (double& x : row) x /= (samples.size() - 1);
    return cov;
}

namespace {

// series expansion of P(a, x), valid for x < a + 1
double gamma_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// continued fraction for Q(a, x), valid for x >= a + 1 (modified Lentz)
double gamma_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double dd = 1.0 / b;
    double h = dd;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        dd = an * dd + b;
        if (std::abs(dd) < tiny) dd = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        dd = 1.0 / dd;
        const double del = dd * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Kolmogorov tail Q(k) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 k^2)
double kolmogorov_q(double k) {
    if (k < 1e-8) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * k * k);
        sum += (j % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::min(1.0, std::max(0.0, 2.0 * sum));
}

}  // namespace

double gammq(double a, double x) {
    if (x < 0 || a <= 0) throw InvalidInput("gammq: needs x >= 0 and a > 0");
    if (x == 0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_series(a, x);
    return gamma_cf(a, x);
}

KsResult ks_exponential(std::vector<double> samples, double rate) {
    if (samples.empty()) throw InvalidInput("ks_exponential: empty sample");
    if (!(rate > 0)) throw InvalidInput("ks_exponential: rate must be > 0");
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = -std::expm1(-rate * samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    const double rn = std::sqrt(static_cast<double>(n));
    KsResult r;
    r.statistic = d;
    r.p_value = kolmogorov_q((rn + 0.12 + 0.11 / rn) * d);
    return r;
}

ChiSquareResult chi_square_counts(const std::vector<long long>& sample1,
                                  const std::vector<long long>& sample2, double min_expected) {
    if (sample1.empty() || sample2.empty()) throw InvalidInput("chi_square: empty sample");
    std::map<long long, std::pair<double, double>> hist;
    for (long long v : sample1) hist[v].first += 1.0;
    for (long long v : sample2) hist[v].second += 1.0;
    const double n1 = static_cast<double>(sample1.size());
    const double n2 = static_cast<double>(sample2.size());
    const double total = n1 + n2;

    // pool adjacent values left-to-right until both expected cells clear the
    // floor; fold any underfull tail into the last kept bin
    std::vector<std::pair<double, double>> bins;
    double acc1 = 0.0, acc2 = 0.0;
    for (const auto& [value, counts] : hist) {
        (void)value;
        acc1 += counts.first;
        acc2 += counts.second;
        const double pooled = acc1 + acc2;
        if (n1 * pooled / total >= min_expected && n2 * pooled / total >= min_expected) {
            bins.emplace_back(acc1, acc2);
            acc1 = acc2 = 0.0;
        }
    }
    if (acc1 + acc2 > 0) {
        if (bins.empty()) {
            bins.emplace_back(acc1, acc2);
        } else {
            bins.back().first += acc1;
            bins.back().second += acc2;
        }
    }
    ChiSquareResult r;
    if (bins.size() < 2) {
        // everything pooled into one bin: the samples are indistinguishable
        r.dof = 0;
        r.p_value = 1.0;
        return r;
    }
    double stat = 0.0;
    for (const auto& [o1, o2] : bins) {
        const double pooled = o1 + o2;
        const double e1 = n1 * pooled / total;
        const double e2 = n2 * pooled / total;
        stat += (o1 - e1) * (o1 - e1) / e1 + (o2 - e2) * (o2 - e2) / e2;
    }
    r.statistic = stat;
    r.dof = static_cast<int>(bins.size()) - 1;
    r.p_value = gammq(0.5 * r.dof, 0.5 * stat);
    return r;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw InvalidInput("log_log_slope: need matching samples of size >= 2");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0))
            throw InvalidInput("log_log_slope: inputs must be positive");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) throw InvalidInput("log_log_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace mfg::stats
