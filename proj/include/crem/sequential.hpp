#ifndef CREM_SEQUENTIAL_HPP
#define CREM_SEQUENTIAL_HPP

#include "crem/disorder.hpp"
#include "crem/keyed_normal.hpp"
#include "crem/oracle.hpp"
#include "crem/partition.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace crem
{

struct SequentialConfig
{
    int m = 1; // lookahead depth
    double beta = 0.0;
    std::uint64_t path_seed = 0;

    void validate(int depth) const
    {
        if (m < 1 || m > depth) throw std::invalid_argument("SequentialConfig: need 1 <= m <= N");
    }
};

/// Lookahead estimate of the normalized partition function below v, log scale.
inline double lookahead_weight(const CremInstance& instance, VertexId v, int m, double beta)
{
    return subtree_normalized_log_Z(instance, v, m, beta);
}

/// Probabilities of stepping from v to v0 and v1: proportional to
/// exp(beta Y_{vx}) times the lookahead weight of vx.
inline std::array<double, 2> child_probabilities(const CremInstance& instance, VertexId v, int m, double beta)
{
    const VertexId c0 = v.child(0), c1 = v.child(1);
    const double l0 = beta * instance.Y(c0) + lookahead_weight(instance, c0, m, beta);
    const double l1 = beta * instance.Y(c1) + lookahead_weight(instance, c1, m, beta);
    // logistic of the log-odds, written to stay finite for any sign
    const double d = l0 - l1;
    const double p0 = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
    const double p1 = d >= 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
    return {p0, p1};
}

struct SequentialSample
{
    VertexId leaf;
    std::vector<double> log_weight_trace; // log probability of each choice made
};

/// Extends the prefix one child at a time for N - m steps, then draws the
/// last m coordinates exactly from the Gibbs measure of the remaining subtree.
inline SequentialSample sample_sequential(const CremInstance& instance, const SequentialConfig& config, PathRng& rng)
{
    const int depth = instance.depth();
    config.validate(depth);
    SequentialSample out;
    VertexId v = VertexId::root();
    for (int t = 1; t <= depth - config.m; ++t) {
        const auto p = child_probabilities(instance, v, config.m, config.beta);
        const int x = uniform01(rng) < p[0] ? 0 : 1;
        out.log_weight_trace.push_back(std::log(p[static_cast<std::size_t>(x)]));
        v = v.child(x);
    }
    const auto inc = instance.subtree_increments(v, config.m);
    std::vector<double> lw(inc.size());
    for (std::size_t i = 0; i < inc.size(); ++i) lw[i] = config.beta * inc[i];
    const auto w = sample_log_categorical(lw, rng);
    const double lz = log_sum_exp(lw);
    out.log_weight_trace.push_back(lw[w] - lz);
    out.leaf = v.extend(VertexId::from_bits(w, config.m));
    return out;
}

inline SequentialSample sample_sequential(const CremInstance& instance, const SequentialConfig& config)
{
    auto rng = make_stream(config.path_seed, 0);
    return sample_sequential(instance, config, rng);
}

inline constexpr int kSamplerLawDepthCap = 16;

/// Exact output law of sample_sequential: the product of child-choice
/// probabilities along each prefix times the final-subtree Gibbs weights.
inline LeafDistribution sampler_law(const CremInstance& instance, const SequentialConfig& config)
{
    const int depth = instance.depth();
    if (depth > kSamplerLawDepthCap) throw std::out_of_range("sampler_law: depth above 16");
    config.validate(depth);
    const int steps = depth - config.m;
    std::vector<double> prefix{1.0}, next;
    for (int t = 0; t < steps; ++t) {
        next.assign(prefix.size() * 2, 0.0);
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            const auto p = child_probabilities(instance, VertexId::from_bits(i, t), config.m, config.beta);
            next[2 * i] = prefix[i] * p[0];
            next[2 * i + 1] = prefix[i] * p[1];
        }
        prefix.swap(next);
    }
    LeafDistribution law{depth, std::vector<double>(std::size_t{1} << depth, 0.0)};
    const std::size_t block = std::size_t{1} << config.m;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        const auto inc = instance.subtree_increments(VertexId::from_bits(i, steps), config.m);
        const double lz = log_sum_exp(inc, config.beta);
        for (std::size_t w = 0; w < block; ++w)
            law.probs[i * block + w] = prefix[i] * std::exp(config.beta * inc[w] - lz);
    }
    return law;
}

} // namespace crem

#endif // CREM_SEQUENTIAL_HPP
