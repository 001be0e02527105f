#include "crem/covariance.hpp"
#include "crem/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace crem;

namespace
{

CovarianceSpec convex2() { return CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.25}, {1, 1}}); }
CovarianceSpec concave2() { return CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.75}, {1, 1}}); }

// Random non-decreasing spec with A(1) = 1 and up to 8 breakpoints.
CovarianceSpec random_spec(std::mt19937_64& rng, double a0 = 0.0)
{
    std::uniform_int_distribution<int> count(0, 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int k = count(rng);
    std::vector<double> xs, ys;
    for (int i = 0; i < k; ++i) {
        xs.push_back(unit(rng));
        ys.push_back(a0 + (1.0 - a0) * unit(rng));
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    std::vector<Breakpoint> pts{{0.0, a0}};
    for (int i = 0; i < k; ++i)
        if (xs[i] > pts.back().x && xs[i] < 1.0) pts.push_back({xs[i], ys[i]});
    pts.push_back({1.0, 1.0});
    return CovarianceSpec::piecewise_linear(pts);
}

// Midpoint rule with many points.
template <typename F>
double midpoint(F f, int points = 1'000'000)
{
    double total = 0.0;
    const double h = 1.0 / points;
    for (int i = 0; i < points; ++i) total += f((i + 0.5) * h);
    return total * h;
}

} // namespace

TEST(Covariance, ValidSpecs)
{
    const auto brw = CovarianceSpec::brw();
    EXPECT_EQ(brw(0.3), 0.3);
    EXPECT_EQ(brw.derivative(0.7), 1.0);
    const auto c = convex2();
    EXPECT_DOUBLE_EQ(c(0.25), 0.125);
    EXPECT_DOUBLE_EQ(c.derivative(0.5), 1.5);
    EXPECT_DOUBLE_EQ(c.derivative(1.0), 1.5);
}

TEST(Covariance, RejectsBadSpecs)
{
    EXPECT_THROW(CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.7}, {0.4, 0.9}, {1, 1}}), std::invalid_argument);
    EXPECT_THROW(CovarianceSpec::piecewise_linear({{0, 0}, {0.5, 0.7}, {1, 0.6}}), std::invalid_argument);
    EXPECT_THROW(CovarianceSpec::piecewise_linear({{0.1, 0}, {1, 1}}), std::invalid_argument);
    EXPECT_THROW(CovarianceSpec::piecewise_linear({{0, -0.1}, {1, 1}}), std::invalid_argument);
    EXPECT_THROW(CovarianceSpec::piecewise_linear({{0, 0}}), std::invalid_argument);
}

TEST(Covariance, HullExamples)
{
    EXPECT_TRUE(std::ranges::equal(concave_hull(CovarianceSpec::brw()).breakpoints(),
                                   CovarianceSpec::brw().breakpoints()));
    const auto h = concave_hull(convex2());
    ASSERT_EQ(h.breakpoints().size(), 2U);
    EXPECT_EQ(h.breakpoints()[0], (Breakpoint{0, 0}));
    EXPECT_EQ(h.breakpoints()[1], (Breakpoint{1, 1}));
    const auto spec = convex2();
    for (const auto& p : spec.breakpoints()) EXPECT_GE(h(p.x), p.value);
    EXPECT_TRUE(std::ranges::equal(concave_hull(concave2()).breakpoints(), concave2().breakpoints()));
}

TEST(Covariance, CollinearPointsCollapse)
{
    const auto spec = CovarianceSpec::piecewise_linear({{0, 0}, {0.25, 0.25}, {0.5, 0.5}, {1, 1}});
    EXPECT_EQ(concave_hull(spec).breakpoints().size(), 2U);
}

TEST(Covariance, HullDominanceAndConcavity)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto spec = random_spec(rng, trial % 3 == 0 ? 0.2 : 0.0);
        const auto hull = concave_hull(spec);
        for (int i = 0; i < 1000; ++i) {
            const double x = unit(rng);
            EXPECT_GE(hull(x), spec(x) - 1e-12);
        }
        const auto pts = hull.breakpoints();
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                const double mid = 0.5 * (pts[i].x + pts[j].x);
                EXPECT_GE(hull(mid), 0.5 * (pts[i].value + pts[j].value) - 1e-12);
            }
        EXPECT_TRUE(is_concave(hull));
    }
}

TEST(Covariance, HullIdempotent)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto hull = concave_hull(random_spec(rng));
        EXPECT_TRUE(std::ranges::equal(concave_hull(hull).breakpoints(), hull.breakpoints()));
    }
}

TEST(Covariance, ThresholdExamples)
{
    const auto brw = thresholds(CovarianceSpec::brw());
    EXPECT_NEAR(brw.beta_c, 1.177410, 1e-6);
    EXPECT_EQ(brw.beta_min, brw.beta_c);
    EXPECT_TRUE(std::isinf(brw.beta_g));
    EXPECT_NEAR(brw.gap(0.5 * brw.beta_c), 0.416277, 1e-6);
    EXPECT_NEAR(brw.gap(0.5 * brw.beta_c), std::sqrt(kLn2) * 0.5, 1e-15);

    const auto t = thresholds(convex2());
    EXPECT_DOUBLE_EQ(t.beta_g, std::sqrt(2 * kLn2 / 1.5));
    EXPECT_NEAR(t.beta_g, 0.961325, 1e-4);
    EXPECT_DOUBLE_EQ(t.beta_c, std::sqrt(2 * kLn2));
    EXPECT_EQ(t.beta_min, t.beta_g);
    EXPECT_DOUBLE_EQ(t.a_max, 1.5);
}

// Independent oracle: sample x densely, flag where A < hull, take the max
// slope there.
TEST(Covariance, BetaGMatchesDenseScan)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = random_spec(rng);
        const auto hull = concave_hull(spec);
        double sup = -1.0;
        for (int i = 0; i < 20000; ++i) {
            const double x = (i + 0.5) / 20000.0;
            if (hull(x) - spec(x) > 1e-9) sup = std::max(sup, spec.derivative(x));
        }
        const auto t = thresholds(spec);
        if (sup < 0.0) {
            EXPECT_TRUE(std::isinf(t.beta_g));
        } else if (sup > 0.0) {
            EXPECT_NEAR(t.beta_g, std::sqrt(2 * kLn2 / sup), 1e-9);
        }
        EXPECT_LE(t.beta_min, t.beta_c);
        EXPECT_LE(t.beta_min, t.beta_g);
    }
}

TEST(Covariance, ThresholdsNeedUnitEndpoint)
{
    EXPECT_THROW(thresholds(CovarianceSpec::piecewise_linear({{0, 0}, {1, 2}})), std::invalid_argument);
}

TEST(Covariance, GremExamples)
{
    const int n = 10;
    const std::vector<int> one{n};
    const std::vector<double> unit{1.0};
    const auto brw = grem_covariance(0.0, one, unit, n);
    for (int i = 0; i <= 1000; ++i) EXPECT_EQ(brw(i / 1000.0), CovarianceSpec::brw()(i / 1000.0));

    const std::vector<int> halves{n / 2, n / 2};
    const std::vector<double> energies{0.5, 1.5};
    const auto g = grem_covariance(0.0, halves, energies, n);
    ASSERT_EQ(g.breakpoints().size(), 3U);
    EXPECT_DOUBLE_EQ(g.breakpoints()[1].x, 0.5);
    EXPECT_DOUBLE_EQ(g.breakpoints()[1].value, 0.25);
    EXPECT_DOUBLE_EQ(g.breakpoints()[2].value, 1.0);

    const std::vector<double> e09{0.9};
    const auto shifted = grem_covariance(0.1, one, e09, n);
    EXPECT_DOUBLE_EQ(shifted(0.0), 0.1);
    EXPECT_DOUBLE_EQ(shifted(1.0), 1.0);

    const std::vector<int> bad{3, 3};
    EXPECT_THROW(grem_covariance(0.0, bad, energies, n), std::invalid_argument);
}

TEST(Covariance, ParseGremString)
{
    const auto g = parse_grem("grem:0,5:0.5,5:1.5", 10);
    EXPECT_TRUE(std::ranges::equal(g.breakpoints(), convex2().breakpoints()));
    EXPECT_THROW(parse_grem("grem:0,5:0.5", 10), std::invalid_argument);
    EXPECT_THROW(parse_grem("grem:x,10:1", 10), std::invalid_argument);
}

TEST(Covariance, FreeEnergyExamples)
{
    const auto brw = CovarianceSpec::brw();
    EXPECT_DOUBLE_EQ(limiting_free_energy(brw, 0.5), kLn2 + 0.125);
    EXPECT_NEAR(limiting_free_energy(brw, 2 * std::sqrt(2 * kLn2)), 4 * kLn2, 1e-14);

    const auto spec = concave2();
    const double expected = 0.5 * detail::free_energy_integrand(std::sqrt(1.5)) +
                            0.5 * detail::free_energy_integrand(std::sqrt(0.5));
    EXPECT_NEAR(limiting_free_energy(spec, 1.0), expected, 1e-15);
    EXPECT_NEAR(limiting_free_energy(spec, 1.0), 1.192587033580414, 1e-12);
}

TEST(Covariance, FreeEnergyMatchesQuadrature)
{
    std::mt19937_64 rng(5);
    const double sq = std::sqrt(2 * kLn2);
    auto f = [&](double x) { return x < sq ? kLn2 + 0.5 * x * x : sq * x; };
    std::vector<CovarianceSpec> specs{CovarianceSpec::brw(), convex2(), concave2()};
    for (int i = 0; i < 4; ++i) specs.push_back(random_spec(rng));
    for (const auto& spec : specs) {
        const auto hull = concave_hull(spec);
        for (double beta : {0.3, 1.0, 2.5}) {
            const double quad = midpoint([&](double s) { return f(beta * std::sqrt(hull.derivative(s))); });
            // The integrand jumps at hull breakpoints, so the midpoint rule is only O(h) there.
            EXPECT_NEAR(limiting_free_energy(spec, beta), quad, 1e-5);
        }
    }
}

TEST(Covariance, GroundStateExamples)
{
    EXPECT_NEAR(ground_state_density(CovarianceSpec::brw(), 1.0), 1.177410, 1e-6);
    EXPECT_EQ(ground_state_density(CovarianceSpec::brw(), 0.0), 0.0);
    const double expected = std::sqrt(2 * kLn2) * (0.5 * std::sqrt(1.5) + 0.5 * std::sqrt(0.5));
    EXPECT_NEAR(ground_state_density(concave2(), 1.0), expected, 1e-15);
    const auto hull = concave_hull(concave2());
    const double quad = std::sqrt(2 * kLn2) * midpoint([&](double s) { return std::sqrt(hull.derivative(s)); });
    EXPECT_NEAR(ground_state_density(concave2(), 1.0), quad, 1e-9);
}

TEST(Covariance, JsonRoundTrip)
{
    const auto spec = convex2();
    const auto back = covariance_from_json(to_json(spec));
    EXPECT_TRUE(std::ranges::equal(back.breakpoints(), spec.breakpoints()));
    EXPECT_TRUE(std::ranges::equal(parse_covariance(to_json(spec).dump(), 10).breakpoints(), spec.breakpoints()));
    EXPECT_THROW(covariance_from_json(nlohmann::json::parse(R"({"points": []})")), std::invalid_argument);
}
