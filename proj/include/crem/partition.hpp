#ifndef CREM_PARTITION_HPP
#define CREM_PARTITION_HPP

#include "crem/covariance.hpp"
#include "crem/disorder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace crem
{

/// log sum_i exp(scale * values[i]), shifted by the maximum exponent.
inline double log_sum_exp(std::span<const double> values, double scale = 1.0)
{
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    double top = -std::numeric_limits<double>::infinity();
    for (double v : values) top = std::max(top, scale * v);
    if (!std::isfinite(top)) return top;
    double sum = 0.0;
    for (double v : values) sum += std::exp(scale * v - top);
    return top + std::log(sum);
}

inline double log_add_exp(double a, double b)
{
    const double top = std::max(a, b);
    if (top == -std::numeric_limits<double>::infinity()) return top;
    return top + std::log(std::exp(a - top) + std::exp(b - top));
}

enum class PartitionKind
{
    exact_level,
    normalized,
    subtree_normalized,
    lookahead,
};

struct PartitionEstimate
{
    double log_value = 0.0;
    PartitionKind kind = PartitionKind::exact_level;
    int n = 0;
    int m = 0;
    VertexId root;
};

namespace detail
{
// Running log-sum-exp accumulated block by block.
// exp(x) for x <= 0, branch-free so the block loop vectorizes. Cody-Waite
// reduction by ln 2 and a degree-13 Taylor polynomial; underflows to 0 below -708.
inline double exp_nonpositive(double x) noexcept
{
    const double xc = x > -708.0 ? x : -708.0;
    const double t = xc * 1.4426950408889634 + 0x1.8p52;
    const double k = t - 0x1.8p52;
    const double r = (xc - k * 6.93147180369123816490e-01) - k * 1.90821492927058770002e-10;
    double p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const std::uint64_t bits = (std::bit_cast<std::uint64_t>(t) + 1023) << 52;
    const std::uint64_t mask = std::uint64_t{0} - static_cast<std::uint64_t>(x >= -708.0);
    return p * std::bit_cast<double>(bits) * std::bit_cast<double>(std::bit_cast<std::uint64_t>(1.0) & mask);
}

struct LogSumAccumulator
{
    static constexpr std::size_t kChunk = 1024;
    double top = -std::numeric_limits<double>::infinity();
    double sum = 0.0;

    void add_block(std::span<const double> values, double scale)
    {
        double block_top = -std::numeric_limits<double>::infinity();
        for (double v : values) block_top = std::max(block_top, scale * v);
        if (!std::isfinite(block_top)) return;
        double block_sum = 0.0;
        alignas(64) double buf[kChunk];
        for (std::size_t start = 0; start < values.size(); start += kChunk) {
            const std::size_t n = std::min(kChunk, values.size() - start);
            const double* q = values.data() + start;
            for (std::size_t i = 0; i < n; ++i) buf[i] = exp_nonpositive(scale * q[i] - block_top);
            double lanes[8] = {};
            std::size_t i = 0;
            for (; i + 8 <= n; i += 8)
                for (std::size_t j = 0; j < 8; ++j) lanes[j] += buf[i + j];
            for (; i < n; ++i) block_sum += buf[i];
            for (double l : lanes) block_sum += l;
        }
        if (block_top > top) {
            sum = sum * std::exp(top - block_top) + block_sum;
            top = block_top;
        } else {
            sum += block_sum * std::exp(block_top - top);
        }
    }

    double value() const { return sum > 0.0 ? top + std::log(sum) : -std::numeric_limits<double>::infinity(); }
};

inline constexpr int kSubtreeBlockDepth = 10;

// log Z at depth n_max, or at every depth 0..n_max when all_levels is set.
// The top n_max - 10 levels are materialized; the rest is walked one
// 2^10-leaf subtree at a time so the working set stays in cache.
inline std::vector<double> level_log_sums(const CremInstance& instance, int n_max, double beta, bool all_levels)
{
    if (n_max > instance.enumeration_cap()) throw std::out_of_range("partition: enumeration cap exceeded");
    if (n_max < 0 || n_max > instance.depth()) throw std::out_of_range("partition: depth outside [0, N]");
    std::vector<LogSumAccumulator> acc(static_cast<std::size_t>(n_max) + 1);
    const int top_depth = std::max(0, n_max - kSubtreeBlockDepth);
    std::vector<double> top{instance.Y(VertexId::root())};
    std::vector<double> next;
    if (all_levels || n_max == 0) acc[0].add_block(top, beta);
    for (int d = 1; d <= top_depth; ++d) {
        instance.extend_level(d, 0, top, next);
        top.swap(next);
        if (all_levels || d == n_max) acc[static_cast<std::size_t>(d)].add_block(top, beta);
    }
    std::vector<double> cur, deeper;
    for (std::size_t i = 0; i < top.size() && top_depth < n_max; ++i) {
        cur.assign(1, top[i]);
        for (int j = 1; j <= n_max - top_depth; ++j) {
            instance.extend_level(top_depth + j, static_cast<std::uint64_t>(i) << (j - 1), cur, deeper);
            cur.swap(deeper);
            if (all_levels || top_depth + j == n_max) acc[static_cast<std::size_t>(top_depth + j)].add_block(cur, beta);
        }
    }
    std::vector<double> out;
    if (all_levels) {
        for (const auto& a : acc) out.push_back(a.value());
    } else {
        out.push_back(acc.back().value());
    }
    return out;
}
} // namespace detail

/// log Z_{beta,n} = log sum_{|v|=n} exp(beta X_v).
inline double exact_log_Z(const CremInstance& instance, int n, double beta)
{
    return detail::level_log_sums(instance, n, beta, false).front();
}

/// log E Z_{beta,n} = n ln 2 + beta^2 a(n) / 2.
inline double annealed_log_Z(const CovarianceSpec& spec, int depth, int n, double beta)
{
    if (n < 0 || n > depth) throw std::out_of_range("annealed_log_Z: need 0 <= n <= N");
    return n * kLn2 + 0.5 * beta * beta * spec.scaled(n, depth);
}

inline double annealed_log_Z(const CremInstance& instance, int n, double beta)
{
    return n * kLn2 + 0.5 * beta * beta * instance.a(n);
}

/// log of Z / E Z at depth n.
inline double normalized_log_Z(const CremInstance& instance, int n, double beta)
{
    return exact_log_Z(instance, n, beta) - annealed_log_Z(instance, n, beta);
}

/// log of the normalized partition function of the depth-m subtree below v.
inline double subtree_normalized_log_Z(const CremInstance& instance, VertexId v, int m, double beta)
{
    if (m < 0 || v.depth() + m > instance.depth())
        throw std::out_of_range("subtree_normalized_log_Z: |v| + m exceeds N");
    if (m == 0) return 0.0;
    const auto inc = instance.subtree_increments(v, m);
    return log_sum_exp(inc, beta) -
           (m * kLn2 + 0.5 * beta * beta * (instance.a(v.depth() + m) - instance.a(v.depth())));
}

/// log Z_{beta,n} for every n in [0, n_max], from one pass down the tree.
inline std::vector<double> exact_log_Z_profile(const CremInstance& instance, int n_max, double beta)
{
    return detail::level_log_sums(instance, n_max, beta, true);
}

struct LookaheadOptions
{
    double constant = 1.0;
};

/// Lookahead depth sufficient for |Zhat_m / Zhat_N - 1| <= epsilon with
/// probability 1 - delta, up to the universal constant C:
///   m = ceil(C (a_max g^-4 ln(1/(delta g)) + g^-2 ln(1/epsilon))), clamped to [1, N].
inline int lookahead_depth(const CovarianceSpec& spec, double beta, int depth, double epsilon, double delta,
                           LookaheadOptions options = {})
{
    const auto t = thresholds(spec);
    const double g = t.gap(beta);
    if (!(beta < t.beta_min) || !(g > 0.0))
        throw std::invalid_argument("lookahead_depth: requires beta < beta_min");
    if (!(epsilon > 0.0) || !(delta > 0.0)) throw std::invalid_argument("lookahead_depth: epsilon, delta > 0");
    const double value = options.constant * (t.a_max / std::pow(g, 4) * std::log(1.0 / (delta * g)) +
                                             std::log(1.0 / epsilon) / (g * g));
    if (!(value < depth)) return depth;
    return std::clamp(static_cast<int>(std::ceil(value)), 1, depth);
}

/// (1/n) log Z_{beta,n}.
inline double free_energy(const CremInstance& instance, int n, double beta)
{
    if (n < 1) throw std::invalid_argument("free_energy: n must be >= 1");
    return exact_log_Z(instance, n, beta) / n;
}

} // namespace crem

#endif // CREM_PARTITION_HPP
