#ifndef CREM_KEYED_NORMAL_HPP
#define CREM_KEYED_NORMAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace crem
{

/// 64-bit finalizer (murmur3 fmix64 variant with an extra round). Bijective.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x ^= x >> 32;
    x *= 0xd6e8feb86659fd93ULL;
    x ^= x >> 32;
    x *= 0xd6e8feb86659fd93ULL;
    x ^= x >> 32;
    return x;
}

/// Hash of a (key, counter) pair. Used for per-vertex disorder and for
/// deriving independent RNG stream seeds from (seed, replica).
constexpr std::uint64_t keyed_hash(std::uint64_t key, std::uint64_t counter) noexcept
{
    const std::uint64_t k = mix64(mix64(key + 0x9e3779b97f4a7c15ULL) ^ 0x94d049bb133111ebULL);
    return mix64(k + counter * 0xbf58476d1ce4e5b9ULL);
}

/// Maps a 64-bit word to the open interval (0,1) on a 2^-53 grid.
constexpr double to_open_unit(std::uint64_t h) noexcept
{
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

namespace detail
{
// AS241 central region, |q| <= 0.425 where q = p - 0.5.
inline double ppnd_central(double q) noexcept
{
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
}

inline double ppnd_tail(double p, double q) noexcept
{
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -x : x;
}
} // namespace detail

/// Inverse of the standard normal CDF (Wichura, AS241 PPND16).
/// Relative accuracy about 1e-16 over the open unit interval.
inline double inverse_normal_cdf(double p) noexcept
{
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) return detail::ppnd_central(q);
    return detail::ppnd_tail(p, q);
}

/// Standard normal draw addressed by (key, counter). Pure function.
inline double keyed_standard_normal(std::uint64_t key, std::uint64_t counter) noexcept
{
    return inverse_normal_cdf(to_open_unit(keyed_hash(key, counter)));
}

/// out[i] = keyed_standard_normal(key, first + i) for i < count. Bit-identical
/// to the scalar version; the central branch is evaluated for a whole block so
/// the compiler can vectorize it.
inline void keyed_standard_normals(std::uint64_t key, std::uint64_t first, std::size_t count, double* out) noexcept
{
    constexpr std::size_t kBlock = 512;
    double p[kBlock];
    double q[kBlock];
    unsigned tails[kBlock];
    for (std::size_t start = 0; start < count; start += kBlock) {
        const std::size_t len = std::min(kBlock, count - start);
        for (std::size_t i = 0; i < len; ++i) {
            p[i] = to_open_unit(keyed_hash(key, first + start + i));
            q[i] = p[i] - 0.5;
        }
        double* dst = out + start;
        for (std::size_t i = 0; i < len; ++i) dst[i] = detail::ppnd_central(q[i]);
        std::size_t n_tail = 0;
        for (std::size_t i = 0; i < len; ++i) {
            tails[n_tail] = static_cast<unsigned>(i);
            n_tail += std::fabs(q[i]) > 0.425 ? 1 : 0;
        }
        for (std::size_t j = 0; j < n_tail; ++j) {
            const unsigned i = tails[j];
            dst[i] = detail::ppnd_tail(p[i], q[i]);
        }
    }
}

/// Disorder seed of the index-th instance in a family rooted at `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept
{
    return keyed_hash(base ^ 0xa0761d6478bd642fULL, index);
}

/// RNG for sampling paths and chain replicas, seeded from (seed, stream).
using PathRng = std::mt19937_64;

inline PathRng make_stream(std::uint64_t seed, std::uint64_t stream)
{
    return PathRng{keyed_hash(seed ^ 0x5851f42d4c957f2dULL, stream)};
}

/// Uniform double in [0,1) with 53 random bits.
inline double uniform01(PathRng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace crem

#endif // CREM_KEYED_NORMAL_HPP
