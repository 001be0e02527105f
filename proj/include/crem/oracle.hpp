#ifndef CREM_ORACLE_HPP
#define CREM_ORACLE_HPP

// Exact small-depth ground truth: Gibbs laws, marginals, total variation, and
// the finite-depth check that the tilted subtree law has density f_n(Zhat).

#include "crem/covariance.hpp"
#include "crem/disorder.hpp"
#include "crem/keyed_normal.hpp"
#include "crem/parallel.hpp"
#include "crem/partition.hpp"
#include "crem/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crem
{

/// Probability vector over {0,1}^n, lexicographic order.
struct LeafDistribution
{
    int depth = 0;
    std::vector<double> probs;

    static LeafDistribution point_mass(int depth, std::uint64_t bits)
    {
        LeafDistribution d{depth, std::vector<double>(std::size_t{1} << depth, 0.0)};
        d.probs.at(bits) = 1.0;
        return d;
    }

    static LeafDistribution uniform(int depth)
    {
        const std::size_t size = std::size_t{1} << depth;
        return {depth, std::vector<double>(size, 1.0 / static_cast<double>(size))};
    }

    double total() const
    {
        double s = 0.0;
        for (double p : probs) s += p;
        return s;
    }
};

inline constexpr int kGibbsCap = 20;

/// Softmax of beta * X over the given level energies.
inline LeafDistribution gibbs_from_energies(int depth, const std::vector<double>& energies, double beta)
{
    const double log_z = log_sum_exp(energies, beta);
    LeafDistribution d{depth, std::vector<double>(energies.size())};
    for (std::size_t i = 0; i < energies.size(); ++i) d.probs[i] = std::exp(beta * energies[i] - log_z);
    return d;
}

/// The depth-n Gibbs measure mu_{beta,n}(v) = exp(beta X_v) / Z_{beta,n}.
inline LeafDistribution exact_gibbs(const CremInstance& instance, int n, double beta)
{
    if (n > kGibbsCap) throw std::out_of_range("exact_gibbs: depth above " + std::to_string(kGibbsCap));
    return gibbs_from_energies(n, instance.level_energies(n), beta);
}

/// Law of the first t coordinates.
inline LeafDistribution marginal_of(const LeafDistribution& dist, int t)
{
    if (t < 0 || t > dist.depth) throw std::out_of_range("marginal_of: t outside [0, depth]");
    const int shift = dist.depth - t;
    LeafDistribution out{t, std::vector<double>(std::size_t{1} << t, 0.0)};
    for (std::size_t i = 0; i < dist.probs.size(); ++i) out.probs[i >> shift] += dist.probs[i];
    return out;
}

inline double tv(const LeafDistribution& p, const LeafDistribution& q)
{
    if (p.depth != q.depth || p.probs.size() != q.probs.size())
        throw std::invalid_argument("tv: depth mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) s += std::fabs(p.probs[i] - q.probs[i]);
    return 0.5 * s;
}

/// Draws an index from probabilities given in log scale (not necessarily normalized).
inline std::size_t sample_log_categorical(const std::vector<double>& log_weights, PathRng& rng)
{
    const double lz = log_sum_exp(log_weights);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
        acc += std::exp(log_weights[i] - lz);
        if (u < acc) return i;
    }
    return log_weights.size() - 1;
}

// ---------------------------------------------------------------------------
// Change of measure for the tilted subtree.

struct TiltOptions
{
    std::uint64_t base_seed = 1;
    int grid_points = 32;
    double se_band = 4.0;
    unsigned workers = default_worker_count();
};

struct TiltBin
{
    double z = 0.0;     // grid point (bin centre)
    double lower = 0.0; // bin edges in z; the outer bins are open-ended
    double upper = 0.0;
    double f = 0.0;     // estimated density f_n(z)
    double f_se = 0.0;
    double direct = 0.0;  // E_Q[1_bin] sampling the prefix from the Gibbs marginal
    double via_density = 0.0; // E_P[f_n(Zhat) 1_bin]
    double diff_se = 0.0;
    bool agree = true;
};

struct TiltReport
{
    int n = 0;
    int extra_depth = 0;
    double beta = 0.0;
    std::size_t seeds = 0;
    std::vector<TiltBin> bins;
    double density_mass = 0.0; // E_P[f_n(Zhat)], should be 1
    double density_mass_se = 0.0;
    bool all_bins_agree = true;
    bool monotone = true;
    bool mass_ok = true;

    bool passed() const { return all_bins_agree && monotone && mass_ok; }
};

namespace detail
{
struct TiltSample
{
    std::vector<double> p;    // mu_{beta,n}(v)
    std::vector<double> zhat; // normalized subtree partition functions below each v
};

inline TiltSample tilt_sample(const CremInstance& inst, int n, int extra, double beta)
{
    const int total = n + extra;
    const auto leaves = inst.level_energies(total);
    const auto top = inst.level_energies(n);
    TiltSample s;
    s.p = gibbs_from_energies(n, top, beta).probs;
    s.zhat.resize(top.size());
    const std::size_t block = std::size_t{1} << extra;
    const double log_mean = extra * kLn2 + 0.5 * beta * beta * (inst.a(total) - inst.a(n));
    for (std::size_t v = 0; v < top.size(); ++v) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < block; ++j) m = std::max(m, beta * (leaves[v * block + j] - top[v]));
        double acc = 0.0;
        for (std::size_t j = 0; j < block; ++j) acc += std::exp(beta * (leaves[v * block + j] - top[v]) - m);
        s.zhat[v] = std::exp(m + std::log(acc) - log_mean);
    }
    return s;
}

// 2^n p_{v0} z / (p_{v0} z + sum_{w != v0} p_w Zhat^w), with v0 = 0...0.
inline double tilt_integrand(double z, const TiltSample& ctx)
{
    double rest = 0.0;
    for (std::size_t w = 1; w < ctx.p.size(); ++w) rest += ctx.p[w] * ctx.zhat[w];
    const double head = ctx.p[0] * z;
    return static_cast<double>(ctx.p.size()) * head / (head + rest);
}
} // namespace detail

/// Monte Carlo check of dQ/dP = f_n(Zhat) at total depth N = n + extra_depth.
/// Grid and bins are log-spaced over the empirical Zhat range; each sample is
/// binned to its nearest grid point in log scale.
inline TiltReport tilt_density_check(const CovarianceSpec& spec, double beta, int n, int extra_depth,
                                     std::size_t seeds, TiltOptions options = {})
{
    if (n < 0 || extra_depth < 1 || n + extra_depth > 16)
        throw std::out_of_range("tilt_density_check: need n >= 0, extra_depth >= 1, n + extra_depth <= 16");
    const auto thr = thresholds(spec);
    if (!(beta >= 0.0 && beta < thr.beta_min)) throw std::invalid_argument("tilt_density_check: need beta < beta_min");
    if (seeds < 4) throw std::invalid_argument("tilt_density_check: need at least 4 seeds");
    if (seeds % 2 == 1) --seeds;
    const int total = n + extra_depth;

    const auto samples = map_indices(
        seeds,
        [&](std::size_t s) {
            CremInstance inst(derive_seed(options.base_seed, s), total, spec);
            return detail::tilt_sample(inst, n, extra_depth, beta);
        },
        options.workers);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : samples)
        for (double z : s.zhat) {
            lo = std::min(lo, std::log(z));
            hi = std::max(hi, std::log(z));
        }
    const int k_bins = options.grid_points;
    const double step = k_bins > 1 && hi > lo ? (hi - lo) / (k_bins - 1) : 0.0;
    auto bin_of = [&](double z) -> std::size_t {
        if (step == 0.0) return 0;
        const double pos = (std::log(z) - lo) / step;
        return static_cast<std::size_t>(std::clamp(std::lround(pos), 0L, static_cast<long>(k_bins - 1)));
    };

    TiltReport report;
    report.n = n;
    report.extra_depth = extra_depth;
    report.beta = beta;
    report.seeds = seeds;
    report.bins.resize(static_cast<std::size_t>(k_bins));
    for (int k = 0; k < k_bins; ++k) {
        auto& b = report.bins[static_cast<std::size_t>(k)];
        b.z = std::exp(lo + k * step);
        b.lower = k == 0 ? 0.0 : std::exp(lo + (k - 0.5) * step);
        b.upper = k == k_bins - 1 ? std::numeric_limits<double>::infinity() : std::exp(lo + (k + 0.5) * step);
    }

    // f_n on the grid; each seed contributes an independent draw of the context.
    std::vector<double> col(seeds);
    std::vector<std::vector<double>> f_draws(static_cast<std::size_t>(k_bins));
    for (int k = 0; k < k_bins; ++k) {
        for (std::size_t s = 0; s < seeds; ++s) col[s] = detail::tilt_integrand(report.bins[k].z, samples[s]);
        const auto ms = stats::mean_se(col);
        report.bins[static_cast<std::size_t>(k)].f = ms.mean;
        report.bins[static_cast<std::size_t>(k)].f_se = ms.se;
        f_draws[static_cast<std::size_t>(k)] = col;
    }
    for (int k = 0; k + 1 < k_bins; ++k) {
        std::vector<double> d(seeds);
        for (std::size_t s = 0; s < seeds; ++s) d[s] = f_draws[k + 1][s] - f_draws[k][s];
        const auto ms = stats::mean_se(d);
        if (ms.mean < -options.se_band * ms.se) report.monotone = false;
    }

    // Direct estimator: prefix v drawn from the depth-N Gibbs marginal, averaged
    // exactly over v. Density estimator: P-sample Zhat^{v0} of seed s, weighted by
    // the integrand evaluated with the context of the partner seed s + S/2, which
    // is independent of seed s. Pairs (s, s + S/2) form independent blocks.
    const std::size_t half = seeds / 2;
    std::vector<std::vector<double>> diff(static_cast<std::size_t>(k_bins), std::vector<double>(seeds, 0.0));
    std::vector<double> direct_sum(static_cast<std::size_t>(k_bins), 0.0), density_sum(direct_sum);
    std::vector<double> mass(seeds);
    for (std::size_t s = 0; s < seeds; ++s) {
        const auto& smp = samples[s];
        double norm = 0.0;
        for (std::size_t v = 0; v < smp.p.size(); ++v) norm += smp.p[v] * smp.zhat[v];
        for (std::size_t v = 0; v < smp.p.size(); ++v) {
            const double w = smp.p[v] * smp.zhat[v] / norm;
            const auto k = bin_of(smp.zhat[v]);
            diff[k][s] += w;
            direct_sum[k] += w;
        }
        const auto& partner = samples[(s + half) % seeds];
        const double weight = detail::tilt_integrand(smp.zhat[0], partner);
        const auto k = bin_of(smp.zhat[0]);
        diff[k][s] -= weight;
        density_sum[k] += weight;
        mass[s] = weight;
    }

    auto paired_se = [&](const std::vector<double>& per_seed) {
        std::vector<double> blocks(half);
        for (std::size_t s = 0; s < half; ++s) blocks[s] = 0.5 * (per_seed[s] + per_seed[s + half]);
        return stats::mean_se(blocks);
    };
    for (int k = 0; k < k_bins; ++k) {
        auto& b = report.bins[static_cast<std::size_t>(k)];
        b.direct = direct_sum[static_cast<std::size_t>(k)] / static_cast<double>(seeds);
        b.via_density = density_sum[static_cast<std::size_t>(k)] / static_cast<double>(seeds);
        const auto ms = paired_se(diff[static_cast<std::size_t>(k)]);
        b.diff_se = ms.se;
        b.agree = std::fabs(b.direct - b.via_density) <= options.se_band * ms.se;
        report.all_bins_agree = report.all_bins_agree && b.agree;
    }
    const auto m = paired_se(mass);
    report.density_mass = m.mean;
    report.density_mass_se = m.se;
    report.mass_ok = m.within(1.0, options.se_band);
    return report;
}

} // namespace crem

#endif // CREM_ORACLE_HPP
