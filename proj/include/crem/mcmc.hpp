#ifndef CREM_MCMC_HPP
#define CREM_MCMC_HPP

// Metropolis chain on the binary tree whose stationary law restricted to each
// level is the Gibbs measure at that level, plus exact analysis of its kernel
// for small depth: stationarity, spectral gap and subtree-cut conductance.

#include "crem/disorder.hpp"
#include "crem/keyed_normal.hpp"
#include "crem/oracle.hpp"
#include "crem/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crem
{

struct ChainConfig
{
    int m0 = 0;          // conditioning depth
    long long steps = 0; // T
    int max_retries = 1;
    double beta = 0.0;
    bool level_boost = false; // multiply depth-N weights by N

    void validate() const
    {
        if (m0 < 0) throw std::invalid_argument("ChainConfig: m0 must be >= 0");
        if (steps < 0) throw std::invalid_argument("ChainConfig: steps must be >= 0");
        if (max_retries < 1) throw std::invalid_argument("ChainConfig: max_retries must be >= 1");
    }
};

/// Unnormalized stationary weights, in log scale:
///   |v| <= m0: log sum over depth-m0 descendants w of exp(beta X_w)
///   |v| >  m0: log Z_{m0} - |v| ln 2 - beta^2 (a(|v|) - a(m0)) / 2 + beta X_v
class StationaryWeights
{
public:
    StationaryWeights(const CremInstance& instance, int m0, double beta, bool level_boost = false)
        : instance_(&instance), m0_(m0), beta_(beta), level_boost_(level_boost)
    {
        if (m0 < 0 || m0 > instance.depth()) throw std::out_of_range("StationaryWeights: m0 outside [0, N]");
        const auto level = instance.level_energies(m0); // enforces the enumeration cap
        shallow_.assign((std::size_t{1} << (m0 + 1)) - 1, 0.0);
        const std::size_t first = (std::size_t{1} << m0) - 1;
        for (std::size_t i = 0; i < level.size(); ++i) shallow_[first + i] = beta * level[i];
        for (std::size_t i = first; i-- > 0;) shallow_[i] = log_add_exp(shallow_[2 * i + 1], shallow_[2 * i + 2]);
        log_z_m0_ = shallow_[0];
    }

    int m0() const noexcept { return m0_; }
    double beta() const noexcept { return beta_; }
    int depth() const noexcept { return instance_->depth(); }
    double log_z_m0() const noexcept { return log_z_m0_; }
    const CremInstance& instance() const noexcept { return *instance_; }

    double log_weight(VertexId v) const
    {
        double lw;
        if (v.depth() <= m0_) {
            lw = shallow_[v.heap_index()];
        } else {
            const int m = v.depth();
            lw = log_z_m0_ - m * kLn2 - 0.5 * beta_ * beta_ * (instance_->a(m) - instance_->a(m0_)) +
                 beta_ * instance_->X(v);
        }
        if (level_boost_ && v.depth() == depth()) lw += std::log(static_cast<double>(depth()));
        return lw;
    }

    /// The deep-branch formula evaluated at any depth (used to check that both
    /// branches agree at depth m0 up to a global constant).
    double deep_formula_log_weight(VertexId v) const
    {
        const int m = v.depth();
        return log_z_m0_ - m * kLn2 - 0.5 * beta_ * beta_ * (instance_->a(m) - instance_->a(m0_)) +
               beta_ * instance_->X(v);
    }

private:
    const CremInstance* instance_;
    int m0_;
    double beta_;
    bool level_boost_;
    std::vector<double> shallow_; // heap-indexed, depths 0..m0
    double log_z_m0_ = 0.0;
};

inline StationaryWeights stationary_weights(const CremInstance& instance, int m0, double beta,
                                            bool level_boost = false)
{
    return StationaryWeights(instance, m0, beta, level_boost);
}

/// Arbitrary unnormalized weights given in log scale for every vertex, in heap order.
class TabulatedWeights
{
public:
    TabulatedWeights(int depth, std::vector<double> log_weights) : depth_(depth), log_w_(std::move(log_weights))
    {
        if (depth < 0 || depth > VertexId::kMaxDepth) throw std::out_of_range("TabulatedWeights: bad depth");
        if (log_w_.size() != (std::size_t{1} << (depth + 1)) - 1)
            throw std::invalid_argument("TabulatedWeights: need one weight per vertex");
    }

    static TabulatedWeights uniform(int depth)
    {
        return {depth, std::vector<double>((std::size_t{1} << (depth + 1)) - 1, 0.0)};
    }

    int depth() const noexcept { return depth_; }
    double log_weight(VertexId v) const { return log_w_.at(v.heap_index()); }

private:
    int depth_;
    std::vector<double> log_w_;
};

struct StepOutcome
{
    VertexId to;
    bool accepted = false;
};

/// One Metropolis step: parent / child 0 / child 1 proposed with probability 1/3
/// each; moves off the tree are rejected; acceptance min{w(target)/w(v), 1}.
template <typename Weights>
StepOutcome mh_step(const Weights& weights, VertexId v, PathRng& rng)
{
    const auto choice = rng() % 3;
    VertexId target;
    if (choice == 0) {
        if (v.is_root()) return {v, false};
        target = v.parent();
    } else {
        if (v.depth() >= weights.depth()) return {v, false};
        target = v.child(static_cast<int>(choice - 1));
    }
    const double log_ratio = weights.log_weight(target) - weights.log_weight(v);
    if (log_ratio >= 0.0 || uniform01(rng) < std::exp(log_ratio)) return {target, true};
    return {v, false};
}

struct ChainRun
{
    VertexId end;
    long long steps = 0;
    long long accepted = 0;

    double accepted_frac() const { return steps == 0 ? 0.0 : static_cast<double>(accepted) / steps; }
};

/// Runs `steps` Metropolis steps from the root.
template <typename Weights>
ChainRun run_chain(const Weights& weights, long long steps, PathRng& rng)
{
    ChainRun run;
    VertexId v = VertexId::root();
    for (long long t = 0; t < steps; ++t) {
        const auto out = mh_step(weights, v, rng);
        v = out.to;
        run.accepted += out.accepted ? 1 : 0;
    }
    run.end = v;
    run.steps = steps;
    return run;
}

inline ChainRun run_chain(const CremInstance& instance, const ChainConfig& config, PathRng& rng)
{
    config.validate();
    const StationaryWeights weights(instance, std::min(config.m0, instance.depth()), config.beta,
                                    config.level_boost);
    return run_chain(weights, config.steps, rng);
}

struct McmcSample
{
    std::optional<VertexId> leaf; // empty when every attempt ended above depth N
    int attempts = 0;
    long long steps_used = 0;
    long long accepted = 0;
    bool brute_force = false;

    double accepted_frac() const { return steps_used == 0 ? 0.0 : static_cast<double>(accepted) / steps_used; }
};

/// Reruns the chain until it ends at depth N, at most max_retries times.
/// When m0 >= N the leaf is drawn exactly from the Gibbs measure.
inline McmcSample sample_mcmc(const CremInstance& instance, const ChainConfig& config, PathRng& rng)
{
    config.validate();
    McmcSample out;
    const int depth = instance.depth();
    if (config.m0 >= depth) {
        const auto energies = instance.level_energies(depth);
        std::vector<double> lw(energies.size());
        for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = config.beta * energies[i];
        out.leaf = VertexId::from_bits(sample_log_categorical(lw, rng), depth);
        out.attempts = 1;
        out.brute_force = true;
        return out;
    }
    const StationaryWeights weights(instance, config.m0, config.beta, config.level_boost);
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        const auto run = run_chain(weights, config.steps, rng);
        ++out.attempts;
        out.steps_used += run.steps;
        out.accepted += run.accepted;
        if (run.end.depth() == depth) {
            out.leaf = run.end;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact kernel analysis.

inline constexpr int kMatrixDepthCap = 12;

/// The chain's transition kernel over all 2^{N+1} - 1 vertices, indexed in
/// breadth-first (heap) order. Each row has at most four non-zero entries, so
/// the kernel is stored by row as (stay, up, down0, down1) probabilities;
/// `at` and `dense` expose it as a matrix.
class TransitionMatrixView
{
public:
    template <typename Weights>
    explicit TransitionMatrixView(const Weights& weights) : depth_(weights.depth())
    {
        if (depth_ > kMatrixDepthCap)
            throw std::out_of_range("transition_matrix: depth above " + std::to_string(kMatrixDepthCap));
        const std::size_t n = size();
        log_w_.resize(n);
        for (std::size_t i = 0; i < n; ++i) log_w_[i] = weights.log_weight(VertexId::from_heap_index(i));
        const double lz = log_sum_exp(log_w_);
        pi_.resize(n);
        for (std::size_t i = 0; i < n; ++i) pi_[i] = std::exp(log_w_[i] - lz);
        up_.assign(n, 0.0);
        down_.assign(2 * n, 0.0);
        stay_.assign(n, 0.0);
        const std::size_t internal = (std::size_t{1} << depth_) - 1;
        for (std::size_t i = 0; i < n; ++i) {
            double moved = 0.0;
            if (i > 0) {
                up_[i] = move_prob(i, (i - 1) / 2);
                moved += up_[i];
            }
            if (i < internal) {
                for (std::size_t x = 0; x < 2; ++x) {
                    down_[2 * i + x] = move_prob(i, 2 * i + 1 + x);
                    moved += down_[2 * i + x];
                }
            }
            stay_[i] = 1.0 - moved;
        }
    }

    int depth() const noexcept { return depth_; }
    std::size_t size() const noexcept { return (std::size_t{1} << (depth_ + 1)) - 1; }
    const std::vector<double>& pi() const noexcept { return pi_; }
    const std::vector<double>& log_weights() const noexcept { return log_w_; }

    double stay(std::size_t i) const { return stay_[i]; }
    double up(std::size_t i) const { return up_[i]; }
    double down(std::size_t i, int x) const { return down_[2 * i + static_cast<std::size_t>(x)]; }
    bool is_leaf(std::size_t i) const { return i >= (std::size_t{1} << depth_) - 1; }

    double at(std::size_t from, std::size_t to) const
    {
        if (from == to) return stay_[from];
        if (from > 0 && to == (from - 1) / 2) return up_[from];
        if (!is_leaf(from) && (to == 2 * from + 1 || to == 2 * from + 2)) return down_[2 * from + (to - 2 * from - 1)];
        return 0.0;
    }

    std::vector<double> dense() const
    {
        const std::size_t n = size();
        if (n > 4095) throw std::out_of_range("dense: matrix too large to materialize");
        std::vector<double> m(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            m[i * n + i] = stay_[i];
            if (i > 0) m[i * n + (i - 1) / 2] = up_[i];
            if (!is_leaf(i))
                for (std::size_t x = 0; x < 2; ++x) m[i * n + 2 * i + 1 + x] = down_[2 * i + x];
        }
        return m;
    }

    double max_row_sum_error() const
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            double s = stay_[i] + (i > 0 ? up_[i] : 0.0);
            if (!is_leaf(i)) s += down_[2 * i] + down_[2 * i + 1];
            worst = std::max(worst, std::fabs(s - 1.0));
        }
        return worst;
    }

    /// max over tree edges of |pi(u)T(u,w) - pi(w)T(w,u)| / max(pi(u)T(u,w), pi(w)T(w,u)).
    double max_detailed_balance_error() const
    {
        double worst = 0.0;
        for (std::size_t i = 1; i < size(); ++i) {
            const std::size_t p = (i - 1) / 2;
            const double fwd = pi_[i] * up_[i];
            const double back = pi_[p] * down_[2 * p + (i - 2 * p - 1)];
            const double scale = std::max(fwd, back);
            if (scale > 0.0) worst = std::max(worst, std::fabs(fwd - back) / scale);
        }
        return worst;
    }

    /// dist <- dist * T
    void step(const std::vector<double>& dist, std::vector<double>& next) const
    {
        next.assign(size(), 0.0);
        for (std::size_t i = 0; i < size(); ++i) {
            const double d = dist[i];
            if (d == 0.0) continue;
            next[i] += d * stay_[i];
            if (i > 0) next[(i - 1) / 2] += d * up_[i];
            if (!is_leaf(i)) {
                next[2 * i + 1] += d * down_[2 * i];
                next[2 * i + 2] += d * down_[2 * i + 1];
            }
        }
    }

    /// Law of V_T for the chain started at the root.
    std::vector<double> power_law(long long steps) const
    {
        std::vector<double> dist(size(), 0.0), next;
        dist[0] = 1.0;
        for (long long t = 0; t < steps; ++t) {
            step(dist, next);
            dist.swap(next);
        }
        return dist;
    }

    /// Conditional law on the vertices of one level of a vertex distribution.
    static LeafDistribution level_law(const std::vector<double>& dist, int level)
    {
        const std::size_t first = (std::size_t{1} << level) - 1;
        LeafDistribution out{level, std::vector<double>(std::size_t{1} << level)};
        double total = 0.0;
        for (std::size_t i = 0; i < out.probs.size(); ++i) total += dist[first + i];
        if (!(total > 0.0)) throw std::domain_error("level_law: level has zero mass");
        for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] = dist[first + i] / total;
        return out;
    }

    /// Symmetrized kernel entry sqrt(T(u,w) T(w,u)) for a tree edge (child, parent).
    double symmetric_edge(std::size_t child) const
    {
        const std::size_t p = (child - 1) / 2;
        return std::sqrt(up_[child] * down_[2 * p + (child - 2 * p - 1)]);
    }

private:
    double move_prob(std::size_t from, std::size_t to) const
    {
        return std::exp(std::min(0.0, log_w_[to] - log_w_[from])) / 3.0;
    }

    int depth_;
    std::vector<double> log_w_;
    std::vector<double> pi_;
    std::vector<double> up_;
    std::vector<double> down_;
    std::vector<double> stay_;
};

inline TransitionMatrixView transition_matrix(const CremInstance& instance, int m0, double beta,
                                              bool level_boost = false)
{
    if (instance.depth() > kMatrixDepthCap)
        throw std::out_of_range("transition_matrix: depth above " + std::to_string(kMatrixDepthCap));
    return TransitionMatrixView(StationaryWeights(instance, m0, beta, level_boost));
}

namespace detail
{
// Number of eigenvalues of the symmetrized kernel strictly below x. The kernel's
// graph is the tree, so eliminating leaves first produces no fill-in and the
// pivot signs give the inertia of S - xI (Sylvester).
inline std::size_t eigenvalues_below(const TransitionMatrixView& t, double x, std::vector<double>& pivot)
{
    const std::size_t n = t.size();
    pivot.assign(n, 0.0);
    std::size_t negatives = 0;
    for (std::size_t i = n; i-- > 0;) {
        double d = t.stay(i) - x;
        if (!t.is_leaf(i)) {
            for (std::size_t c = 2 * i + 1; c <= 2 * i + 2; ++c) {
                const double e = t.symmetric_edge(c);
                d -= e * e / pivot[c];
            }
        }
        if (d == 0.0) d = -std::numeric_limits<double>::min();
        pivot[i] = d;
        if (d < 0.0) ++negatives;
    }
    return negatives;
}
} // namespace detail

/// 1 - lambda_2 of the reversible kernel, from bisection on eigenvalue counts
/// of the symmetrized form D^{1/2} T D^{-1/2}.
inline double spectral_gap(const TransitionMatrixView& t, double balance_tolerance = 1e-10)
{
    if (t.max_detailed_balance_error() > balance_tolerance)
        throw std::invalid_argument("spectral_gap: kernel is not reversible");
    if (t.size() < 2) return 1.0;
    std::vector<double> pivot;
    const std::size_t n = t.size();
    double lo = -1.0 - 1e-12, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        // at least two eigenvalues >= mid  <=>  lambda_2 >= mid
        if (n - detail::eigenvalues_below(t, mid, pivot) >= 2)
            lo = mid;
        else
            hi = mid;
    }
    return 1.0 - 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Conductance.

/// Bottleneck ratio of a cut: Q(A, A^c) / min(pi(A) - s, pi(A^c) - s).
/// Membership is given per heap index.
inline double cut_ratio(const TransitionMatrixView& t, const std::vector<bool>& in_a, double s)
{
    double flow = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (in_a[i]) mass += t.pi()[i];
        if (i > 0 && in_a[i] != in_a[(i - 1) / 2]) flow += t.pi()[i] * t.up(i);
    }
    const double denom = std::min(mass - s, 1.0 - mass - s);
    return denom > 0.0 ? flow / denom : std::numeric_limits<double>::infinity();
}

inline constexpr int kExhaustiveCutDepthCap = 4;

namespace detail
{
// (mass, flow) of every subset of `leaves`, given which parents are in A.
inline void leaf_subset_sums(const TransitionMatrixView& t, const std::vector<double>& edge,
                             const std::vector<std::uint8_t>& in, std::size_t first, std::size_t count,
                             std::vector<double>& mass, std::vector<double>& flow)
{
    const std::size_t size = std::size_t{1} << count;
    mass.assign(size, 0.0);
    flow.assign(size, 0.0);
    double base_flow = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t leaf = first + j;
        if (in[(leaf - 1) / 2]) base_flow += edge[leaf]; // leaf outside A, parent inside
    }
    flow[0] = base_flow;
    for (std::size_t k = 1; k < size; ++k) {
        const auto j = static_cast<std::size_t>(std::countr_zero(k));
        const std::size_t prev = k & (k - 1);
        const std::size_t leaf = first + j;
        mass[k] = mass[prev] + t.pi()[leaf];
        flow[k] = flow[prev] + (in[(leaf - 1) / 2] ? -edge[leaf] : edge[leaf]);
    }
}
} // namespace detail

/// s-conductance by enumerating every vertex subset (N <= 4). A and its
/// complement give the same ratio, so the root is fixed outside A. Internal
/// vertices are walked in Gray-code order; for each of their assignments the
/// leaves are split into two halves whose subset sums are combined pairwise.
inline double exhaustive_conductance(const TransitionMatrixView& t, double s = 0.0)
{
    if (t.depth() > kExhaustiveCutDepthCap) throw std::out_of_range("exhaustive_conductance: depth above 4");
    if (!(s >= 0.0 && s < 0.5)) throw std::invalid_argument("exhaustive_conductance: need 0 <= s < 1/2");
    const std::size_t n = t.size();
    if (n == 1) return std::numeric_limits<double>::infinity();
    const auto& pi = t.pi();
    std::vector<double> edge(n, 0.0); // pi(child) T(child, parent), indexed by child
    for (std::size_t i = 1; i < n; ++i) edge[i] = pi[i] * t.up(i);
    const std::size_t internal = (std::size_t{1} << t.depth()) - 1;
    const std::size_t leaves = n - internal;
    const std::size_t half = leaves / 2;

    std::vector<std::uint8_t> in(n, 0);
    std::vector<double> m1, f1, m2, f2;
    double best = std::numeric_limits<double>::infinity();
    // internal vertices other than the root: 1 .. internal-1
    const std::uint64_t count = std::uint64_t{1} << (internal - 1);
    for (std::uint64_t k = 0; k < count; ++k) {
        if (k > 0) {
            const auto i = 1 + static_cast<std::size_t>(std::countr_zero(k));
            in[i] ^= 1U;
        }
        double mass = 0.0, flow = 0.0;
        for (std::size_t j = 1; j < internal; ++j) {
            if (in[j]) mass += pi[j];
            if (in[j] != in[(j - 1) / 2]) flow += edge[j];
        }
        detail::leaf_subset_sums(t, edge, in, internal, half, m1, f1);
        detail::leaf_subset_sums(t, edge, in, internal + half, leaves - half, m2, f2);
        // every flow term is a sum of cut edges, so flow / (1/2 - s) bounds the
        // ratio from below
        const double min_f1 = *std::min_element(f1.begin(), f1.end());
        const double min_f2 = *std::min_element(f2.begin(), f2.end());
        if (flow + min_f1 + min_f2 >= best * (0.5 - s)) continue;
        for (std::size_t a = 0; a < m1.size(); ++a) {
            const double ma = mass + m1[a];
            const double fa = flow + f1[a];
            if (fa + min_f2 >= best * (0.5 - s)) continue;
            for (std::size_t b = 0; b < m2.size(); ++b) {
                const double m = ma + m2[b];
                const double denom = std::min(m - s, 1.0 - m - s);
                const double ratio = denom > 0.0 ? (fa + f2[b]) / denom : std::numeric_limits<double>::infinity();
                best = ratio < best ? ratio : best;
            }
        }
    }
    return best;
}

struct SubtreeCut
{
    std::vector<VertexId> roots; // S: the disjoint subtree roots generating A
    double mass = 0.0;           // pi(A)
    double root_mass = 0.0;      // pi(S)
    double flow = 0.0;           // Q(A, A^c)
    double value = 0.0;
};

struct SubtreeScan
{
    /// Minimum bottleneck ratio over subtree unions A with pi(A) in (s, 1-s).
    /// Computed by enumerating antichains, so only for N <= 4.
    std::optional<SubtreeCut> best_cut;
    /// min over subtree unions with pi(A) > s of (1/3) pi(S) / (pi(A) - s), which
    /// lower-bounds the s-conductance.
    SubtreeCut lower_bound;
};

namespace detail
{
struct AntichainOption
{
    std::uint64_t mask = 0; // bit per heap index of subtree roots
    double mass = 0.0;
    double root_mass = 0.0;
    double flow = 0.0;
};

inline std::vector<AntichainOption> antichains(const TransitionMatrixView& t, const std::vector<double>& subtree_mass,
                                               std::size_t v)
{
    AntichainOption self{std::uint64_t{1} << v, subtree_mass[v], t.pi()[v], v > 0 ? t.pi()[v] * t.up(v) : 0.0};
    if (t.is_leaf(v)) return {AntichainOption{}, self};
    const auto left = antichains(t, subtree_mass, 2 * v + 1);
    const auto right = antichains(t, subtree_mass, 2 * v + 2);
    std::vector<AntichainOption> out;
    out.reserve(left.size() * right.size() + 1);
    for (const auto& l : left)
        for (const auto& r : right)
            out.push_back({l.mask | r.mask, l.mass + r.mass, l.root_mass + r.root_mass, l.flow + r.flow});
    out.push_back(self);
    return out;
}

inline std::vector<double> subtree_masses(const TransitionMatrixView& t)
{
    std::vector<double> m = t.pi();
    for (std::size_t i = t.size(); i-- > 1;) m[(i - 1) / 2] += m[i];
    return m;
}

inline std::vector<VertexId> roots_of(std::uint64_t mask)
{
    std::vector<VertexId> out;
    for (std::size_t i = 0; i < 64; ++i)
        if ((mask >> i) & 1U) out.push_back(VertexId::from_heap_index(i));
    return out;
}

// min over antichains S of sum_{v in S} (pi(v) - r pi(T_v)); returns the value
// and fills `chosen` with the minimizing roots.
inline double ratio_dp(const TransitionMatrixView& t, const std::vector<double>& subtree_mass, double r,
                       std::vector<std::uint8_t>& take, std::vector<double>& best)
{
    const std::size_t n = t.size();
    take.assign(n, 0);
    best.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        const double self = t.pi()[i] - r * subtree_mass[i];
        const double below = t.is_leaf(i) ? 0.0 : best[2 * i + 1] + best[2 * i + 2];
        if (self < below) {
            best[i] = self;
            take[i] = 1;
        } else {
            best[i] = below;
        }
    }
    return best[0];
}

inline void collect_roots(const TransitionMatrixView& t, const std::vector<std::uint8_t>& take, std::size_t v,
                          std::vector<std::size_t>& out)
{
    if (take[v]) {
        out.push_back(v);
        return;
    }
    if (t.is_leaf(v)) return;
    collect_roots(t, take, 2 * v + 1, out);
    collect_roots(t, take, 2 * v + 2, out);
}
} // namespace detail

/// Subtree-union cuts of the kernel. The lower-bound form is minimized exactly
/// for any depth by Dinkelbach iteration over a tree dynamic program; the
/// bottleneck ratio over subtree unions is enumerated when N <= 4.
inline SubtreeScan subtree_conductance_scan(const TransitionMatrixView& t, double s)
{
    if (t.depth() > 8) throw std::out_of_range("subtree_conductance_scan: depth above 8");
    if (!(s >= 0.0 && s < 0.5)) throw std::invalid_argument("subtree_conductance_scan: no feasible set for s >= 1/2");
    const auto subtree_mass = detail::subtree_masses(t);
    SubtreeScan scan;

    // Dinkelbach on pi(S) / (pi(A) - s), started from S = {root}.
    std::vector<std::uint8_t> take;
    std::vector<double> best;
    std::vector<std::size_t> roots{0};
    auto ratio_of = [&](const std::vector<std::size_t>& rs, double& mass, double& root_mass) {
        mass = 0.0;
        root_mass = 0.0;
        for (auto v : rs) {
            mass += subtree_mass[v];
            root_mass += t.pi()[v];
        }
        return root_mass / (mass - s);
    };
    double mass = 0.0, root_mass = 0.0;
    double r = ratio_of(roots, mass, root_mass);
    for (int it = 0; it < 200; ++it) {
        const double g = detail::ratio_dp(t, subtree_mass, r, take, best) + r * s;
        if (!(g < -1e-15 * std::max(1.0, r))) break;
        std::vector<std::size_t> next;
        detail::collect_roots(t, take, 0, next);
        double m2 = 0.0, rm2 = 0.0;
        const double r2 = ratio_of(next, m2, rm2);
        if (!(r2 < r)) break;
        roots = std::move(next);
        r = r2;
        mass = m2;
        root_mass = rm2;
    }
    scan.lower_bound.mass = mass;
    scan.lower_bound.root_mass = root_mass;
    scan.lower_bound.value = r / 3.0;
    for (auto v : roots) {
        scan.lower_bound.roots.push_back(VertexId::from_heap_index(v));
        if (v > 0) scan.lower_bound.flow += t.pi()[v] * t.up(v);
    }

    if (t.depth() <= kExhaustiveCutDepthCap) {
        const auto options = detail::antichains(t, subtree_mass, 0);
        SubtreeCut cut;
        cut.value = std::numeric_limits<double>::infinity();
        std::uint64_t best_mask = 0;
        for (const auto& o : options) {
            if (o.mask & 1U) continue; // A is the whole tree
            const double denom = std::min(o.mass - s, 1.0 - o.mass - s);
            if (!(denom > 0.0)) continue;
            const double value = o.flow / denom;
            if (value < cut.value) {
                cut.value = value;
                cut.mass = o.mass;
                cut.root_mass = o.root_mass;
                cut.flow = o.flow;
                best_mask = o.mask;
            }
        }
        if (std::isfinite(cut.value)) {
            cut.roots = detail::roots_of(best_mask);
            scan.best_cut = std::move(cut);
        }
    }
    return scan;
}

/// The bound pi(S) / (pi(A) - s) for every antichain, by enumeration (N <= 4).
/// Test oracle for the dynamic program above.
inline double enumerate_lower_bound(const TransitionMatrixView& t, double s)
{
    if (t.depth() > kExhaustiveCutDepthCap) throw std::out_of_range("enumerate_lower_bound: depth above 4");
    const auto subtree_mass = detail::subtree_masses(t);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : detail::antichains(t, subtree_mass, 0))
        if (o.mass - s > 0.0) best = std::min(best, o.root_mass / (o.mass - s));
    return best / 3.0;
}

} // namespace crem

#endif // CREM_MCMC_HPP
