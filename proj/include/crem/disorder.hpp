#ifndef CREM_DISORDER_HPP
#define CREM_DISORDER_HPP

#include "crem/covariance.hpp"
#include "crem/keyed_normal.hpp"

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace crem
{

/// A vertex of the binary tree: the path bits from the root, first step in the
/// most significant position, so numeric order of `bits` at fixed depth is
/// lexicographic order of paths.
class VertexId
{
public:
    static constexpr int kMaxDepth = 62;

    constexpr VertexId() = default;

    static VertexId root() { return {}; }

    static VertexId from_bits(std::uint64_t bits, int depth)
    {
        if (depth < 0 || depth > kMaxDepth) throw std::out_of_range("VertexId: depth out of range");
        if (depth < 64 && (bits >> depth) != 0) throw std::out_of_range("VertexId: bits exceed depth");
        return VertexId{bits, depth};
    }

    /// Parses a string of '0'/'1' characters; the empty string is the root.
    static VertexId parse(std::string_view text)
    {
        VertexId v;
        for (char c : text) {
            if (c != '0' && c != '1') throw std::invalid_argument("VertexId: expected a string of 0/1");
            v = v.child(c - '0');
        }
        return v;
    }

    constexpr std::uint64_t bits() const noexcept { return bits_; }
    constexpr int depth() const noexcept { return depth_; }
    constexpr bool is_root() const noexcept { return depth_ == 0; }

    VertexId child(int x) const
    {
        if (depth_ >= kMaxDepth) throw std::out_of_range("VertexId: depth limit");
        return VertexId{(bits_ << 1) | static_cast<std::uint64_t>(x & 1), depth_ + 1};
    }

    VertexId parent() const
    {
        if (depth_ == 0) throw std::logic_error("VertexId: root has no parent");
        return VertexId{bits_ >> 1, depth_ - 1};
    }

    /// The t-th step of the path, t in [1, depth].
    int step(int t) const { return static_cast<int>((bits_ >> (depth_ - t)) & 1U); }

    VertexId prefix(int t) const
    {
        if (t < 0 || t > depth_) throw std::out_of_range("VertexId: prefix length");
        return VertexId{bits_ >> (depth_ - t), t};
    }

    /// Concatenation v w.
    VertexId extend(VertexId suffix) const
    {
        if (depth_ + suffix.depth_ > kMaxDepth) throw std::out_of_range("VertexId: depth limit");
        return VertexId{(bits_ << suffix.depth_) | suffix.bits_, depth_ + suffix.depth_};
    }

    bool is_ancestor_of(VertexId other) const
    {
        return depth_ <= other.depth_ && (other.bits_ >> (other.depth_ - depth_)) == bits_;
    }

    /// Breadth-first index: root 0, children of i are 2i+1 and 2i+2.
    constexpr std::uint64_t heap_index() const noexcept { return ((std::uint64_t{1} << depth_) - 1) + bits_; }

    static VertexId from_heap_index(std::uint64_t index)
    {
        int d = 0;
        while (((std::uint64_t{1} << (d + 1)) - 1) <= index) ++d;
        return from_bits(index - ((std::uint64_t{1} << d) - 1), d);
    }

    std::string to_string() const
    {
        std::string s(static_cast<std::size_t>(depth_), '0');
        for (int t = 1; t <= depth_; ++t) s[static_cast<std::size_t>(t - 1)] = static_cast<char>('0' + step(t));
        return s;
    }

    friend constexpr bool operator==(VertexId, VertexId) = default;
    friend constexpr auto operator<=>(VertexId a, VertexId b)
    {
        if (auto c = a.depth_ <=> b.depth_; c != 0) return c;
        return a.bits_ <=> b.bits_;
    }

private:
    constexpr VertexId(std::uint64_t bits, int depth) : bits_(bits), depth_(depth) {}

    std::uint64_t bits_ = 0;
    int depth_ = 0;
};

/// All vertices of one level with their energies, lexicographic order.
class LevelEnumeration
{
public:
    LevelEnumeration(int depth, std::vector<double> energies) : depth_(depth), energies_(std::move(energies)) {}

    class iterator
    {
    public:
        using value_type = std::pair<VertexId, double>;
        using difference_type = std::ptrdiff_t;

        iterator() = default;
        iterator(const LevelEnumeration* owner, std::size_t i) : owner_(owner), i_(i) {}

        value_type operator*() const
        {
            return {VertexId::from_bits(i_, owner_->depth_), owner_->energies_[i_]};
        }
        iterator& operator++()
        {
            ++i_;
            return *this;
        }
        iterator operator++(int)
        {
            auto copy = *this;
            ++i_;
            return copy;
        }
        friend bool operator==(const iterator&, const iterator&) = default;

    private:
        const LevelEnumeration* owner_ = nullptr;
        std::size_t i_ = 0;
    };

    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, energies_.size()}; }
    std::size_t size() const noexcept { return energies_.size(); }
    int depth() const noexcept { return depth_; }
    const std::vector<double>& energies() const noexcept { return energies_; }
    std::vector<double> release() && { return std::move(energies_); }

private:
    int depth_;
    std::vector<double> energies_;
};

/// A seeded CREM disorder on the depth-N binary tree. Edge variables Y_u are
/// pure functions of (seed, u), so the tree is materialized lazily and any
/// query order gives the same values. Path energies X_v are memoized write-once.
class CremInstance
{
public:
    static constexpr int kDefaultEnumerationCap = 25;

    CremInstance(std::uint64_t seed, int depth, CovarianceSpec spec)
        : seed_(seed), depth_(depth), spec_(std::move(spec)), cache_(std::make_unique<Cache>())
    {
        if (depth < 1) throw std::invalid_argument("CremInstance: depth must be >= 1");
        if (depth > VertexId::kMaxDepth) throw std::invalid_argument("CremInstance: depth too large");
        a_.resize(static_cast<std::size_t>(depth) + 1);
        sd_.resize(a_.size());
        for (int m = 0; m <= depth; ++m) a_[static_cast<std::size_t>(m)] = spec_.scaled(m, depth);
        sd_[0] = std::sqrt(a_[0]);
        for (std::size_t m = 1; m < a_.size(); ++m) sd_[m] = std::sqrt(std::max(0.0, a_[m] - a_[m - 1]));
    }

    CremInstance(const CremInstance& other)
        : seed_(other.seed_), depth_(other.depth_), spec_(other.spec_), a_(other.a_), sd_(other.sd_),
          cap_(other.cap_), cache_(std::make_unique<Cache>())
    {
    }
    CremInstance& operator=(const CremInstance& other)
    {
        if (this != &other) *this = CremInstance(other);
        return *this;
    }
    CremInstance(CremInstance&&) noexcept = default;
    CremInstance& operator=(CremInstance&&) noexcept = default;

    std::uint64_t seed() const noexcept { return seed_; }
    int depth() const noexcept { return depth_; }
    const CovarianceSpec& spec() const noexcept { return spec_; }

    /// a(m) = N A(m/N) at integer depth m.
    double a(int m) const { return a_.at(static_cast<std::size_t>(m)); }

    /// Standard deviation of Y_u for |u| = m.
    double increment_sd(int m) const { return sd_.at(static_cast<std::size_t>(m)); }

    int enumeration_cap() const noexcept { return cap_; }
    void set_enumeration_cap(int cap) { cap_ = cap; }

    double Y(VertexId v) const
    {
        check_depth(v.depth());
        return y_raw(v.depth(), v.bits());
    }

    double X(VertexId v) const
    {
        check_depth(v.depth());
        const std::uint64_t key = v.heap_index();
        {
            std::shared_lock lock(cache_->mutex);
            if (auto it = cache_->x.find(key); it != cache_->x.end()) return it->second;
        }
        // Find the deepest cached ancestor, then fill downward.
        std::vector<VertexId> missing{v};
        double base = 0.0;
        bool found = false;
        {
            std::shared_lock lock(cache_->mutex);
            VertexId u = v;
            while (!u.is_root()) {
                u = u.parent();
                if (auto it = cache_->x.find(u.heap_index()); it != cache_->x.end()) {
                    base = it->second;
                    found = true;
                    break;
                }
                missing.push_back(u);
            }
        }
        if (!found) base = 0.0; // missing.back() is the root; its Y is added below
        std::vector<std::pair<std::uint64_t, double>> fresh;
        fresh.reserve(missing.size());
        for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
            base += y_raw(it->depth(), it->bits());
            fresh.emplace_back(it->heap_index(), base);
        }
        std::unique_lock lock(cache_->mutex);
        double result = base;
        for (const auto& [k, x] : fresh) {
            auto [it, inserted] = cache_->x.try_emplace(k, x);
            if (k == key) result = it->second;
        }
        return result;
    }

    /// Energies of every vertex at depth n, lexicographic order. Bypasses the memo.
    std::vector<double> level_energies(int n) const
    {
        check_cap(n);
        check_depth(n);
        std::vector<double> cur{y_raw(0, 0)};
        std::vector<double> next;
        for (int d = 1; d <= n; ++d) {
            extend_level(d, 0, cur, next);
            cur.swap(next);
        }
        return cur;
    }

    LevelEnumeration enumerate_level(int n) const { return {n, level_energies(n)}; }

    /// X_{vw} - X_v for all |w| = m, lexicographic in w. Computed as sums of the
    /// edge variables below v.
    std::vector<double> subtree_increments(VertexId v, int m) const
    {
        check_cap(m);
        if (m < 0 || v.depth() + m > depth_) throw std::out_of_range("subtree: depth exceeds the tree");
        std::vector<double> cur{0.0};
        std::vector<double> next;
        for (int j = 1; j <= m; ++j) {
            extend_level(v.depth() + j, v.bits() << (j - 1), cur, next);
            cur.swap(next);
        }
        return cur;
    }

    /// next[2i+x] = cur[i] + Y(child), where the parents at depth d-1 have bits
    /// first_parent + i.
    void extend_level(int d, std::uint64_t first_parent, const std::vector<double>& cur,
                       std::vector<double>& next) const
    {
        next.resize(cur.size() * 2);
        const double sd = sd_[static_cast<std::size_t>(d)];
        const std::uint64_t offset = ((std::uint64_t{1} << d) - 1) + (first_parent << 1);
        if (sd == 0.0) {
            for (std::size_t i = 0; i < cur.size(); ++i) next[2 * i] = next[2 * i + 1] = cur[i];
            return;
        }
        keyed_standard_normals(seed_, offset, next.size(), next.data());
        for (std::size_t i = 0; i < cur.size(); ++i) {
            next[2 * i] = cur[i] + sd * next[2 * i];
            next[2 * i + 1] = cur[i] + sd * next[2 * i + 1];
        }
    }

    std::size_t cached_vertices() const
    {
        std::shared_lock lock(cache_->mutex);
        return cache_->x.size();
    }

private:
    struct Cache
    {
        mutable std::shared_mutex mutex;
        std::unordered_map<std::uint64_t, double> x;
    };

    double y_raw(int depth, std::uint64_t bits) const
    {
        const double sd = sd_[static_cast<std::size_t>(depth)];
        if (sd == 0.0) return 0.0;
        const std::uint64_t key = ((std::uint64_t{1} << depth) - 1) + bits;
        return sd * keyed_standard_normal(seed_, key);
    }

    void check_depth(int n) const
    {
        if (n < 0 || n > depth_) throw std::out_of_range("depth " + std::to_string(n) + " outside [0, N]");
    }
    void check_cap(int n) const
    {
        if (n > cap_)
            throw std::out_of_range("enumeration depth " + std::to_string(n) + " exceeds cap " +
                                    std::to_string(cap_));
    }

    std::uint64_t seed_;
    int depth_;
    CovarianceSpec spec_;
    std::vector<double> a_;
    std::vector<double> sd_;
    int cap_ = kDefaultEnumerationCap;
    std::unique_ptr<Cache> cache_;
};

} // namespace crem

#endif // CREM_DISORDER_HPP
