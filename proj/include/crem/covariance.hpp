#ifndef CREM_COVARIANCE_HPP
#define CREM_COVARIANCE_HPP

// Piecewise-linear covariance functions A on [0,1], their concave hull, and
// the inverse-temperature thresholds and limiting closed forms derived from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crem
{

inline constexpr double kLn2 = std::numbers::ln2;

/// sqrt(2 ln 2): the critical inverse temperature of the branching random walk.
inline const double kSqrt2Ln2 = std::sqrt(2.0 * kLn2);

struct Breakpoint
{
    double x;
    double value;

    friend bool operator==(const Breakpoint&, const Breakpoint&) = default;
};

/// Non-decreasing piecewise-linear A: [0,1] -> [0,inf) given by its breakpoints.
/// A'(x) is the right derivative (slope of the segment starting at or after x).
class CovarianceSpec
{
public:
    static CovarianceSpec piecewise_linear(std::vector<Breakpoint> points)
    {
        if (points.size() < 2)
            throw std::invalid_argument("covariance: need at least the endpoints x=0 and x=1");
        if (points.front().x != 0.0 || points.back().x != 1.0)
            throw std::invalid_argument("covariance: first breakpoint must be x=0 and last x=1");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (!std::isfinite(p.x) || !std::isfinite(p.value))
                throw std::invalid_argument("covariance: non-finite breakpoint");
            if (p.value < 0.0)
                throw std::invalid_argument("covariance: negative value");
            if (i > 0) {
                if (!(p.x > points[i - 1].x))
                    throw std::invalid_argument("covariance: x-coordinates must be strictly increasing");
                if (p.value < points[i - 1].value)
                    throw std::invalid_argument("covariance: values must be non-decreasing");
            }
        }
        return CovarianceSpec{std::move(points)};
    }

    /// A(x) = x, the branching random walk.
    static CovarianceSpec brw() { return piecewise_linear({{0.0, 0.0}, {1.0, 1.0}}); }

    std::span<const Breakpoint> breakpoints() const noexcept { return points_; }
    std::size_t segments() const noexcept { return points_.size() - 1; }

    double slope(std::size_t segment) const
    {
        const auto& l = points_.at(segment);
        const auto& r = points_.at(segment + 1);
        return (r.value - l.value) / (r.x - l.x);
    }

    /// Linear interpolation; x is clamped to [0,1].
    double operator()(double x) const
    {
        if (x <= 0.0) return points_.front().value;
        if (x >= 1.0) return points_.back().value;
        const auto it = std::upper_bound(points_.begin(), points_.end(), x,
                                         [](double v, const Breakpoint& b) { return v < b.x; });
        const auto& r = *it;
        const auto& l = *(it - 1);
        const double t = (x - l.x) / (r.x - l.x);
        return l.value + t * (r.value - l.value);
    }

    /// Right derivative. At x=1 the last segment's slope is returned.
    double derivative(double x) const
    {
        if (x >= 1.0) return slope(segments() - 1);
        const auto it = std::upper_bound(points_.begin(), points_.end(), std::max(x, 0.0),
                                         [](double v, const Breakpoint& b) { return v < b.x; });
        return slope(static_cast<std::size_t>(it - points_.begin()) - 1);
    }

    /// Unnormalized covariance a(m) = N * A(m / N).
    double scaled(double m, int depth) const { return depth * (*this)(m / depth); }

    double max_slope() const
    {
        double best = 0.0;
        for (std::size_t s = 0; s < segments(); ++s) best = std::max(best, slope(s));
        return best;
    }

    friend bool operator==(const CovarianceSpec&, const CovarianceSpec&) = default;

private:
    explicit CovarianceSpec(std::vector<Breakpoint> points) : points_(std::move(points)) {}

    std::vector<Breakpoint> points_;
};

namespace detail
{
// Cross product of (b - a) x (c - a); >= 0 means b is on or below chord ac.
inline double turn(const Breakpoint& a, const Breakpoint& b, const Breakpoint& c)
{
    return (b.x - a.x) * (c.value - a.value) - (b.value - a.value) * (c.x - a.x);
}
} // namespace detail

/// Smallest concave function dominating A: the upper hull of the breakpoints
/// (monotone chain). Collinear breakpoints are dropped.
inline CovarianceSpec concave_hull(const CovarianceSpec& spec)
{
    std::vector<Breakpoint> hull;
    for (const auto& p : spec.breakpoints()) {
        while (hull.size() >= 2 && detail::turn(hull[hull.size() - 2], hull.back(), p) >= 0.0)
            hull.pop_back();
        hull.push_back(p);
    }
    return CovarianceSpec::piecewise_linear(std::move(hull));
}

inline bool is_concave(const CovarianceSpec& spec)
{
    const auto hull = concave_hull(spec);
    for (const auto& p : spec.breakpoints())
        if (std::fabs(hull(p.x) - p.value) > 1e-12 * std::max(1.0, std::fabs(p.value))) return false;
    return true;
}

struct Thresholds
{
    double a_max = 0.0;     // sup A'
    double a_hat_max = 0.0; // sup of the hull's slope
    double beta_c = 0.0;
    double beta_g = std::numeric_limits<double>::infinity();
    double beta_min = 0.0;

    /// g(beta) = sqrt(ln 2) - beta * sqrt(a_max / 2). Positive iff beta < beta_min.
    double gap(double beta) const { return std::sqrt(kLn2) - beta * std::sqrt(a_max / 2.0); }
};

inline void require_unit_endpoint(const CovarianceSpec& spec)
{
    if (std::fabs(spec.breakpoints().back().value - 1.0) > 1e-12)
        throw std::invalid_argument("covariance: threshold computations require A(1) = 1, got A(1) = " +
                                    std::to_string(spec.breakpoints().back().value));
}

inline Thresholds thresholds(const CovarianceSpec& spec)
{
    require_unit_endpoint(spec);
    const auto hull = concave_hull(spec);
    Thresholds t;
    t.a_max = spec.max_slope();
    t.a_hat_max = hull.max_slope();
    t.beta_c = std::sqrt(2.0 * kLn2 / t.a_hat_max);

    // A segment coincides with the hull iff both its endpoints touch the hull;
    // otherwise A < hull on its open interior.
    auto touches = [&](const Breakpoint& p) {
        return std::fabs(hull(p.x) - p.value) <= 1e-12 * std::max(1.0, std::fabs(p.value));
    };
    const auto pts = spec.breakpoints();
    double below_sup = -1.0;
    for (std::size_t s = 0; s < spec.segments(); ++s)
        if (!(touches(pts[s]) && touches(pts[s + 1]))) below_sup = std::max(below_sup, spec.slope(s));
    if (below_sup >= 0.0)
        t.beta_g = below_sup > 0.0 ? std::sqrt(2.0 * kLn2 / below_sup)
                                   : std::numeric_limits<double>::infinity();
    t.beta_min = std::min(t.beta_c, t.beta_g);
    return t;
}

/// Covariance of a generalized random energy model: initial energy a0 and
/// blocks of integer length s_i with per-level energy e_i (slope e_i on the block).
inline CovarianceSpec grem_covariance(double a0, std::span<const int> lengths, std::span<const double> energies,
                                      int depth)
{
    if (lengths.size() != energies.size() || lengths.empty())
        throw std::invalid_argument("grem: lengths and energies must be non-empty and of equal size");
    if (a0 < 0.0) throw std::invalid_argument("grem: negative initial energy");
    long total = 0;
    for (int s : lengths) {
        if (s <= 0) throw std::invalid_argument("grem: block lengths must be positive");
        total += s;
    }
    if (total != depth) throw std::invalid_argument("grem: block lengths must sum to the depth");
    for (double e : energies)
        if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("grem: energies must be non-negative");

    std::vector<Breakpoint> pts{{0.0, a0}};
    long cum = 0;
    double value = a0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        cum += lengths[i];
        value += energies[i] * lengths[i] / depth;
        pts.push_back({cum == depth ? 1.0 : static_cast<double>(cum) / depth, value});
    }
    return CovarianceSpec::piecewise_linear(std::move(pts));
}

namespace detail
{
inline double free_energy_integrand(double x)
{
    return x < kSqrt2Ln2 ? kLn2 + 0.5 * x * x : kSqrt2Ln2 * x;
}
} // namespace detail

/// Quenched free energy limit: integral over [0,1] of f(beta * sqrt(hull'(s))),
/// exact because the hull slope is constant on each segment.
inline double limiting_free_energy(const CovarianceSpec& spec, double beta)
{
    require_unit_endpoint(spec);
    if (!(beta > 0.0)) throw std::invalid_argument("limiting_free_energy: beta must be positive");
    const auto hull = concave_hull(spec);
    const auto pts = hull.breakpoints();
    double total = 0.0;
    for (std::size_t s = 0; s < hull.segments(); ++s)
        total += (pts[s + 1].x - pts[s].x) * detail::free_energy_integrand(beta * std::sqrt(hull.slope(s)));
    return total;
}

/// Limiting ground-state energy density: beta sqrt(2 ln 2) * integral of sqrt(hull').
inline double ground_state_density(const CovarianceSpec& spec, double beta)
{
    const auto hull = concave_hull(spec);
    const auto pts = hull.breakpoints();
    double integral = 0.0;
    for (std::size_t s = 0; s < hull.segments(); ++s)
        integral += (pts[s + 1].x - pts[s].x) * std::sqrt(hull.slope(s));
    return beta * kSqrt2Ln2 * integral;
}

} // namespace crem

#endif // CREM_COVARIANCE_HPP
