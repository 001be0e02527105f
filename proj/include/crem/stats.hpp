#ifndef CREM_STATS_HPP
#define CREM_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace crem::stats
{

struct MeanSe
{
    double mean = 0.0;
    double se = 0.0;
    double sd = 0.0;
    std::size_t n = 0;

    /// |mean - target| <= k * se (also true when both sides are exactly zero).
    bool within(double target, double k = 4.0) const { return std::fabs(mean - target) <= k * se; }
};

inline MeanSe mean_se(std::span<const double> xs)
{
    MeanSe r;
    r.n = xs.size();
    if (xs.empty()) return r;
    // Welford
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (double x : xs) {
        ++k;
        const double d = x - mean;
        mean += d / static_cast<double>(k);
        m2 += d * (x - mean);
    }
    r.mean = mean;
    if (xs.size() > 1) {
        r.sd = std::sqrt(m2 / static_cast<double>(xs.size() - 1));
        r.se = r.sd / std::sqrt(static_cast<double>(xs.size()));
    }
    return r;
}

/// Sample quantile with linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> xs, double q)
{
    if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

/// Least-squares slope of y against x.
inline double ols_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols_slope: need >= 2 paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

} // namespace crem::stats

#endif // CREM_STATS_HPP
