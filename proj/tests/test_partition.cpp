#include "crem/partition.hpp"
#include "crem/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace crem;

namespace
{

CovarianceSpec convex2() { return CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.25}, {1, 1}}); }

// Plain two-pass log-sum-exp over an explicit level, the reference for the
// blocked accumulator.
double reference_log_Z(const CremInstance& inst, int n, double beta)
{
    return log_sum_exp(inst.level_energies(n), beta);
}

} // namespace

TEST(Partition, SmallExamples)
{
    const CremInstance inst(42, 10, CovarianceSpec::brw());
    EXPECT_EQ(exact_log_Z(inst, 0, 0.7), 0.0);
    const double beta = 1.3;
    const double x0 = inst.X(VertexId::parse("0")), x1 = inst.X(VertexId::parse("1"));
    EXPECT_NEAR(exact_log_Z(inst, 1, beta), std::log(std::exp(beta * x0) + std::exp(beta * x1)), 1e-14);
    EXPECT_NEAR(free_energy(inst, 1, beta), std::log(std::exp(beta * x0) + std::exp(beta * x1)), 1e-14);
    EXPECT_DOUBLE_EQ(free_energy(inst, 7, 0.0), kLn2);
}

TEST(Partition, BlockedSumMatchesReference)
{
    for (int n : {1, 9, 10, 11, 16}) {
        const CremInstance inst(derive_seed(8, static_cast<std::uint64_t>(n)), 16, convex2());
        for (double beta : {0.0, 0.5, 3.0})
            EXPECT_NEAR(exact_log_Z(inst, n, beta), reference_log_Z(inst, n, beta), 1e-12) << n << " " << beta;
        const auto profile = exact_log_Z_profile(inst, n, 0.8);
        ASSERT_EQ(profile.size(), static_cast<std::size_t>(n) + 1);
        for (int k = 0; k <= n; ++k) EXPECT_NEAR(profile[k], reference_log_Z(inst, k, 0.8), 1e-12);
    }
}

TEST(Partition, LogSumExpStable)
{
    const CremInstance inst(1, 12, CovarianceSpec::brw());
    // |beta X| reaches about 10^3 here.
    const double beta = 1000.0 / 6.0;
    EXPECT_TRUE(std::isfinite(exact_log_Z(inst, 12, beta)));
    EXPECT_TRUE(std::isfinite(exact_log_Z(inst, 12, -beta)));
    const std::vector<double> big{1000.0, 999.0};
    EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log1p(std::exp(-1.0)), 1e-12);
    EXPECT_EQ(log_sum_exp(std::vector<double>{}), -std::numeric_limits<double>::infinity());
    EXPECT_NEAR(log_add_exp(-800.0, -801.0), -800.0 + std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(Partition, AnnealedExamples)
{
    const auto brw = CovarianceSpec::brw();
    EXPECT_EQ(annealed_log_Z(brw, 10, 0, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(annealed_log_Z(brw, 10, 8, 0.5), 8 * kLn2 + 1.0);
    EXPECT_DOUBLE_EQ(annealed_log_Z(convex2(), 10, 10, 1.0), 10 * kLn2 + 5.0);
    EXPECT_THROW(annealed_log_Z(brw, 10, 11, 0.5), std::out_of_range);
}

TEST(Partition, BetaZeroNormalizedIsOne)
{
    const CremInstance inst(3, 12, convex2());
    for (int n = 0; n <= 12; ++n) EXPECT_NEAR(normalized_log_Z(inst, n, 0.0), 0.0, 1e-13);
}

TEST(Partition, AnnealedMatchesMonteCarlo)
{
    const double beta = 0.5;
    std::vector<double> z(10'000);
    for (std::size_t s = 0; s < z.size(); ++s) {
        const CremInstance inst(derive_seed(10, s), 8, CovarianceSpec::brw());
        z[s] = std::exp(exact_log_Z(inst, 8, beta));
    }
    const auto m = stats::mean_se(z);
    EXPECT_TRUE(m.within(std::pow(2.0, 8) * std::exp(beta * beta * 8 / 2))) << m.mean << " se " << m.se;
}

TEST(Partition, MartingaleMeanAndIncrements)
{
    const auto spec = convex2();
    const double beta = 0.8 * thresholds(spec).beta_min;
    const std::size_t seeds = 10'000;
    std::vector<std::vector<double>> zhat(11, std::vector<double>(seeds));
    for (std::size_t s = 0; s < seeds; ++s) {
        const CremInstance inst(derive_seed(11, s), 10, spec);
        const auto profile = exact_log_Z_profile(inst, 10, beta);
        for (int n = 0; n <= 10; ++n) zhat[n][s] = std::exp(profile[n] - annealed_log_Z(inst, n, beta));
    }
    EXPECT_TRUE(stats::mean_se(zhat[10]).within(1.0));
    for (int n = 0; n < 10; ++n) {
        std::vector<double> inc(seeds);
        for (std::size_t s = 0; s < seeds; ++s) inc[s] = zhat[n + 1][s] - zhat[n][s];
        EXPECT_TRUE(stats::mean_se(inc).within(0.0)) << "n=" << n;
    }
}

TEST(Partition, SubtreeNormalized)
{
    const CremInstance inst(21, 12, convex2());
    const double beta = 0.6;
    EXPECT_EQ(subtree_normalized_log_Z(inst, VertexId::parse("0101"), 0, beta), 0.0);
    EXPECT_NEAR(subtree_normalized_log_Z(inst, VertexId::root(), 7, beta), normalized_log_Z(inst, 7, beta), 1e-12);
    EXPECT_THROW(subtree_normalized_log_Z(inst, VertexId::parse("0101"), 9, beta), std::out_of_range);

    const auto v = VertexId::parse("011");
    std::vector<double> z(10'000);
    for (std::size_t s = 0; s < z.size(); ++s) {
        const CremInstance other(derive_seed(12, s), 12, convex2());
        z[s] = std::exp(subtree_normalized_log_Z(other, v, 6, beta));
    }
    EXPECT_TRUE(stats::mean_se(z).within(1.0));
}

TEST(Partition, LookaheadDepth)
{
    const auto brw = CovarianceSpec::brw();
    const double beta = 0.5 * thresholds(brw).beta_min;
    // Frozen from g = 0.4162773..., a_max = 1: 119.154... rounded up.
    EXPECT_EQ(lookahead_depth(brw, beta, 1000, 0.1, 0.1), 120);
    EXPECT_EQ(lookahead_depth(brw, beta, 60, 0.1, 0.1), 60);
    // g -> sqrt(ln 2): 2.83 rounds up to 3; a huge delta drives the formula below 1.
    EXPECT_EQ(lookahead_depth(brw, 1e-6, 40, 0.5, 0.5), 3);
    EXPECT_EQ(lookahead_depth(brw, 1e-6, 40, 0.9, 10.0), 1);
    EXPECT_EQ(lookahead_depth(brw, beta, 1000, 0.1, 0.1, {.constant = 2.0}), 239);
    EXPECT_THROW(lookahead_depth(brw, 1.2, 40, 0.1, 0.1), std::invalid_argument);
    // Monotone in both tolerances.
    EXPECT_LE(lookahead_depth(brw, beta, 1000, 0.2, 0.1), lookahead_depth(brw, beta, 1000, 0.1, 0.1));
    EXPECT_LE(lookahead_depth(brw, beta, 1000, 0.1, 0.2), lookahead_depth(brw, beta, 1000, 0.1, 0.1));
}

TEST(Partition, FreeEnergyNearLimit)
{
    std::vector<double> f(100);
    for (std::size_t s = 0; s < f.size(); ++s) {
        const CremInstance inst(derive_seed(13, s), 20, CovarianceSpec::brw());
        f[s] = free_energy(inst, 20, 0.5);
    }
    EXPECT_NEAR(stats::mean_se(f).mean, kLn2 + 0.125, 0.02);
}

TEST(Partition, EnumerationCap)
{
    CremInstance inst(1, 30, CovarianceSpec::brw());
    inst.set_enumeration_cap(12);
    EXPECT_THROW(exact_log_Z(inst, 13, 0.5), std::out_of_range);
    EXPECT_NO_THROW(exact_log_Z(inst, 12, 0.5));
}
