#include "crem/disorder.hpp"
#include "crem/io.hpp"
#include "crem/keyed_normal.hpp"
#include "crem/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

using namespace crem;

namespace
{

constexpr std::size_t kSeeds = 100'000;

// Kolmogorov-Smirnov statistic of a sample against the standard normal.
double ks_statistic(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-xs[i] / std::sqrt(2.0));
        d = std::max({d, std::fabs(cdf - i / n), std::fabs((i + 1) / n - cdf)});
    }
    return d;
}

// Sample covariance with its standard error (delta-method free: the SE of the
// mean of centred products).
stats::MeanSe covariance(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto mx = stats::mean_se(x).mean;
    const auto my = stats::mean_se(y).mean;
    std::vector<double> prod(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) prod[i] = (x[i] - mx) * (y[i] - my);
    return stats::mean_se(prod);
}

} // namespace

TEST(KeyedNormal, InverseCdfMatchesBoost)
{
    const boost::math::normal_distribution<double> normal;
    std::vector<double> ps{1e-300, 1e-100, 1e-20, 1e-8, 1e-3, 0.02425, 0.075, 0.3, 0.5, 0.7, 0.925, 0.999};
    for (int i = 1; i < 1000; ++i) ps.push_back(i / 1000.0);
    for (double p : ps) {
        const double want = boost::math::quantile(normal, p);
        EXPECT_NEAR(inverse_normal_cdf(p), want, 1e-13 * std::max(1.0, std::fabs(want))) << p;
    }
    EXPECT_TRUE(std::isinf(inverse_normal_cdf(0.0)));
    EXPECT_TRUE(std::isnan(inverse_normal_cdf(1.5)));
}

TEST(KeyedNormal, BatchEqualsScalar)
{
    std::vector<double> out(5000);
    keyed_standard_normals(42, 123, out.size(), out.data());
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], keyed_standard_normal(42, 123 + i));
}

TEST(KeyedNormal, StreamsDiffer)
{
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    auto a = make_stream(5, 0);
    auto b = make_stream(5, 1);
    EXPECT_NE(a(), b());
}

TEST(VertexId, Relations)
{
    const auto v = VertexId::parse("0110");
    EXPECT_EQ(v.depth(), 4);
    EXPECT_EQ(v.to_string(), "0110");
    EXPECT_EQ(v.parent().to_string(), "011");
    EXPECT_EQ(v.prefix(2).to_string(), "01");
    EXPECT_EQ(v.step(2), 1);
    EXPECT_TRUE(v.prefix(1).is_ancestor_of(v));
    EXPECT_FALSE(v.is_ancestor_of(v.prefix(1)));
    EXPECT_EQ(v.prefix(2).extend(VertexId::parse("10")), v);
    EXPECT_EQ(VertexId::from_heap_index(v.heap_index()), v);
    EXPECT_TRUE(VertexId::root().is_root());
    EXPECT_THROW(VertexId::root().parent(), std::logic_error);
    EXPECT_THROW(VertexId::parse("012"), std::invalid_argument);
    EXPECT_THROW(VertexId::from_bits(4, 2), std::out_of_range);
}

TEST(Disorder, RootExamples)
{
    const CremInstance brw(42, 10, CovarianceSpec::brw());
    EXPECT_EQ(brw.X(VertexId::root()), 0.0);
    EXPECT_EQ(brw.Y(VertexId::root()), 0.0);
    const auto shifted = CovarianceSpec::piecewise_linear({{0, 0.1}, {1, 1}});
    const CremInstance inst(42, 10, shifted);
    EXPECT_DOUBLE_EQ(inst.a(0), 1.0);
    EXPECT_DOUBLE_EQ(inst.increment_sd(0), 1.0);
}

TEST(Disorder, Deterministic)
{
    const CremInstance a(42, 10, CovarianceSpec::brw());
    const CremInstance b(42, 10, CovarianceSpec::brw());
    const CremInstance other(43, 10, CovarianceSpec::brw());
    for (std::uint64_t i = 0; i < 1024; ++i) {
        const auto v = VertexId::from_bits(i, 10);
        EXPECT_EQ(a.X(v), b.X(v));
        EXPECT_NE(a.X(v), other.X(v));
    }
}

TEST(Disorder, ZeroVarianceIncrementIsExactlyZero)
{
    const auto flat = CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0}, {1, 1}});
    const CremInstance inst(9, 10, flat);
    for (std::uint64_t i = 0; i < 8; ++i) EXPECT_EQ(inst.Y(VertexId::from_bits(i, 3)), 0.0);
    EXPECT_NE(inst.Y(VertexId::from_bits(0, 7)), 0.0);
}

TEST(Disorder, Additivity)
{
    const CremInstance inst(7, 12, CovarianceSpec::brw());
    std::mt19937_64 rng(1);
    for (int k = 0; k < 200; ++k) {
        const auto v = VertexId::from_bits(rng() & 0xFFF, 12);
        EXPECT_EQ(inst.X(v), inst.X(v.parent()) + inst.Y(v));
        double sum = 0.0;
        for (int t = 0; t <= 12; ++t) sum += inst.Y(v.prefix(t));
        EXPECT_NEAR(inst.X(v), sum, 1e-12);
    }
}

TEST(Disorder, OrderIndependence)
{
    const int n = 14;
    std::mt19937_64 rng(2);
    std::vector<VertexId> vs;
    for (int k = 0; k < 1000; ++k) {
        const int d = static_cast<int>(rng() % (n + 1));
        vs.push_back(VertexId::from_bits(d == 0 ? 0 : rng() >> (64 - d), d));
    }
    const CremInstance fresh(77, n, CovarianceSpec::brw());
    std::vector<double> shuffled(vs.size());
    auto perm = vs;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const auto& v : perm) (void)fresh.X(v);
    for (std::size_t i = 0; i < vs.size(); ++i) shuffled[i] = fresh.X(vs[i]);

    const CremInstance dfs(77, n, CovarianceSpec::brw());
    auto sorted = vs;
    std::sort(sorted.begin(), sorted.end(), [](VertexId a, VertexId b) { return a.to_string() < b.to_string(); });
    for (const auto& v : sorted) (void)dfs.X(v);
    for (std::size_t i = 0; i < vs.size(); ++i) EXPECT_EQ(dfs.X(vs[i]), shuffled[i]);

    // Bulk enumeration agrees with the memoized path.
    const auto level = fresh.level_energies(n);
    for (const auto& v : vs)
        if (v.depth() == n) EXPECT_EQ(level[v.bits()], fresh.X(v));
}

TEST(Disorder, ConcurrentReadersAgree)
{
    const CremInstance inst(5, 16, CovarianceSpec::brw());
    const CremInstance ref(5, 16, CovarianceSpec::brw());
    std::vector<std::thread> pool;
    std::vector<std::vector<double>> got(4, std::vector<double>(4096));
    for (int w = 0; w < 4; ++w)
        pool.emplace_back([&, w] {
            for (std::uint64_t i = 0; i < 4096; ++i) {
                const std::uint64_t j = (i * (2 * w + 1)) % 4096;
                got[w][j] = inst.X(VertexId::from_bits(j << 4, 16));
            }
        });
    for (auto& t : pool) t.join();
    for (std::uint64_t j = 0; j < 4096; ++j)
        for (int w = 0; w < 4; ++w) ASSERT_EQ(got[w][j], ref.X(VertexId::from_bits(j << 4, 16)));
}

TEST(Disorder, EnumerationContract)
{
    const CremInstance inst(3, 30, CovarianceSpec::brw());
    const auto root = inst.enumerate_level(0);
    ASSERT_EQ(root.size(), 1U);
    EXPECT_EQ(root.energies()[0], 0.0);
    const auto three = inst.enumerate_level(3);
    ASSERT_EQ(three.size(), 8U);
    std::uint64_t expected = 0;
    for (auto [v, x] : three) {
        EXPECT_EQ(v, VertexId::from_bits(expected++, 3));
        EXPECT_EQ(x, inst.X(v));
    }
    EXPECT_THROW(inst.level_energies(26), std::out_of_range);
}

TEST(Disorder, MeanAndVarianceOfY)
{
    // a-increment 2.0: A has slope 2 on [0.5, 1) and N = 10 gives a(6) - a(5) = 2.
    const auto spec = CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0}, {1, 1}});
    const auto u = VertexId::parse("010011");
    std::vector<double> ys(kSeeds), sq(kSeeds);
    for (std::size_t s = 0; s < kSeeds; ++s) {
        const CremInstance inst(derive_seed(100, s), 10, spec);
        ys[s] = inst.Y(u);
        sq[s] = ys[s] * ys[s];
    }
    EXPECT_TRUE(stats::mean_se(ys).within(0.0)) << stats::mean_se(ys).mean;
    const auto var = stats::mean_se(sq);
    EXPECT_TRUE(var.within(2.0)) << var.mean << " se " << var.se;
}

TEST(Disorder, KolmogorovSmirnov)
{
    const auto spec = CovarianceSpec::piecewise_linear({{0, 0}, {0.3, 0.6}, {1, 1}});
    const auto u = VertexId::parse("1101");
    std::vector<double> zs(kSeeds);
    for (std::size_t s = 0; s < kSeeds; ++s) {
        const CremInstance inst(derive_seed(200, s), 10, spec);
        zs[s] = inst.Y(u) / inst.increment_sd(4);
    }
    // Asymptotic critical value at significance 1e-3.
    const double critical = std::sqrt(-0.5 * std::log(0.5e-3)) / std::sqrt(static_cast<double>(kSeeds));
    EXPECT_LT(ks_statistic(zs), critical);
}

TEST(Disorder, IndependenceProxy)
{
    const auto u = VertexId::parse("00101");
    const auto w = VertexId::parse("00100");
    std::vector<double> a(kSeeds), b(kSeeds);
    for (std::size_t s = 0; s < kSeeds; ++s) {
        const CremInstance inst(derive_seed(300, s), 8, CovarianceSpec::brw());
        a[s] = inst.Y(u);
        b[s] = inst.Y(w);
    }
    EXPECT_TRUE(covariance(a, b).within(0.0));
}

TEST(Disorder, CovarianceOfLeafEnergies)
{
    const int n = 10;
    const auto spec = CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.25}, {1, 1}});
    const auto v = VertexId::parse("0110100110");
    for (int k : {0, 3, 5, 8}) {
        // w agrees with v on the first k steps and differs at step k+1.
        auto w = v.prefix(k).child(1 - v.step(k + 1));
        while (w.depth() < n) w = w.child(0);
        std::vector<double> xv(kSeeds), xw(kSeeds);
        for (std::size_t s = 0; s < kSeeds; ++s) {
            const CremInstance inst(derive_seed(400 + k, s), n, spec);
            xv[s] = inst.X(v);
            xw[s] = inst.X(w);
        }
        const auto c = covariance(xv, xw);
        EXPECT_TRUE(c.within(n * spec(static_cast<double>(k) / n))) << "k=" << k << " cov=" << c.mean;
    }
}

// The subtree below v is a CREM with the shifted covariance m -> a(|v| + m).
TEST(Disorder, SubtreeTranslation)
{
    const int n = 10, base = 4;
    const auto spec = CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.25}, {1, 1}});
    const auto v = VertexId::parse("0110");
    const auto tail = VertexId::parse("101");
    std::vector<double> inc(20000);
    for (std::size_t s = 0; s < inc.size(); ++s) {
        const CremInstance inst(derive_seed(500, s), n, spec);
        const auto sub = inst.subtree_increments(v, 3);
        inc[s] = sub[tail.bits()] * sub[tail.bits()];
        ASSERT_NEAR(sub[tail.bits()], inst.X(v.extend(tail)) - inst.X(v), 1e-12);
    }
    const CremInstance probe(1, n, spec);
    EXPECT_TRUE(stats::mean_se(inc).within(probe.a(base + 3) - probe.a(base)));
}

TEST(Disorder, DumpCsv)
{
    const CremInstance inst(42, 4, CovarianceSpec::brw());
    std::ostringstream out;
    write_disorder_csv(out, inst, 2);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "path_bits,depth,Y,X");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 7);
    EXPECT_THROW(write_disorder_csv(out, inst, 5), std::out_of_range);
}
