#include "crem/experiments.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace crem;

namespace
{

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("crem_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

// Reduced grids so every experiment finishes in about a second.
ExperimentPlan small_plan(const std::string& name)
{
    auto plan = default_plan(name);
    const std::map<std::string, nlohmann::json> overrides{
        {"martingale", {{"depths", {4, 6}}, {"seeds", 500}}},
        {"annealedZ", {{"depths", {6}}, {"seeds", 500}}},
        {"maxleaf", {{"depths", {8}}, {"seeds", 100}}},
        {"concentration", {{"depths", {10}}, {"seeds", 300}}},
        {"zratio", {{"depths", {10}}, {"lookaheads", {2, 4, 6, 8}}, {"seeds", 40}}},
        {"seq-tv", {{"depths", {8}}, {"lookaheads", {1, 2, 4, 8}}, {"seeds", 10}}},
        {"seq-exact", {{"depths", {6}}, {"seeds", 3}}},
        {"mcmc-tv", {{"depths", {4}}, {"steps", {20000}}, {"seeds", 3}}},
        {"gap-decay", {{"depths", {3, 4, 5, 6}}, {"seeds", 10}}},
        {"tilt", {{"extra_depth", 4}, {"depths", {2}}, {"seeds", 2000}}},
        {"moments", {{"depths", {10}}, {"seeds", 300}}},
        {"zbig", {{"depths", {8}}, {"seeds", 300}}},
        {"conductance", {{"depths", {2, 3}}, {"seeds", 3}}},
    };
    if (auto it = overrides.find(name); it != overrides.end()) plan = apply_config(plan, it->second);
    return plan;
}

} // namespace

TEST(Experiments, RegistryCoversEveryCriterion)
{
    const auto names = experiment_names();
    const std::set<std::string> have(names.begin(), names.end());
    for (const char* n : {"martingale", "annealedZ", "maxleaf", "concentration", "zratio", "seq-tv", "mcmc-tv",
                          "gap-decay", "tilt", "moments", "zbig", "seq-exact", "conductance"})
        EXPECT_TRUE(have.contains(n)) << n;
}

TEST(Experiments, UnknownExperiment)
{
    ExperimentPlan plan;
    plan.name = "nope";
    EXPECT_THROW(run(plan), std::invalid_argument);
    EXPECT_THROW(default_plan("nope"), std::invalid_argument);
}

TEST(Experiments, ConfigParsing)
{
    const auto doc = nlohmann::json::parse(R"({"seeds": 7, "beta_multipliers": [0.25], "tolerances": {"x": 2},
                                               "covariances": ["brw", "grem:0,5:0.5,5:1.5"]})");
    const auto plan = apply_config(default_plan("martingale"), doc);
    EXPECT_EQ(plan.seeds, 7U);
    EXPECT_EQ(plan.beta_multipliers, std::vector<double>{0.25});
    EXPECT_EQ(plan.tolerance("x"), 2.0);
    EXPECT_EQ(plan.covariances.size(), 2U);
    EXPECT_THROW(plan.tolerance("missing"), std::invalid_argument);
    EXPECT_THROW(apply_config(plan, nlohmann::json::parse(R"({"seedz": 1})")), std::invalid_argument);
    EXPECT_THROW(apply_config(plan, nlohmann::json::parse("[1]")), std::invalid_argument);

    // to_json round-trips through apply_config.
    const auto again = apply_config(ExperimentPlan{}, to_json(plan));
    EXPECT_EQ(to_json(again), to_json(plan));
}

TEST(Experiments, EverySmallPlanRuns)
{
    for (const auto& name : experiment_names()) {
        const auto report = run(small_plan(name));
        EXPECT_FALSE(report.checks.empty()) << name;
        EXPECT_GT(report.table.rows(), 0U) << name;
        const auto summary = report.summary();
        EXPECT_EQ(summary["schema_version"], kSummarySchemaVersion);
        EXPECT_EQ(summary["experiment"], name);
        EXPECT_EQ(summary["passed"].get<bool>(), report.passed());
    }
}

TEST(Experiments, Deterministic)
{
    for (const char* name : {"martingale", "seq-tv", "tilt", "zbig"}) {
        auto plan = small_plan(name);
        const auto dir_a = scratch_dir(std::string(name) + "_a");
        const auto dir_b = scratch_dir(std::string(name) + "_b");
        plan.out_dir = dir_a.string();
        plan.workers = 1;
        run(plan);
        plan.out_dir = dir_b.string();
        plan.workers = 4;
        run(plan);
        const auto csv = std::string(name) + ".csv";
        EXPECT_EQ(slurp(dir_a / csv), slurp(dir_b / csv)) << name;
        EXPECT_FALSE(slurp(dir_a / csv).empty());
        EXPECT_TRUE(std::filesystem::exists(dir_a / (std::string(name) + ".json")));
    }
}

TEST(Experiments, UnwritableOutput)
{
    const auto file = scratch_dir("blocker");
    std::ofstream(file.string()) << "x";
    auto plan = small_plan("annealedZ");
    plan.out_dir = (file / "sub").string();
    EXPECT_THROW(run(plan), std::runtime_error);
}

TEST(Experiments, ZbigProbe)
{
    const auto brw = CovarianceSpec::brw();
    const auto flat = zbig_probe(brw, 0.0, 10, 200);
    EXPECT_EQ(flat.fraction, 1.0);
    const double bmin = thresholds(brw).beta_min;
    const auto lo = zbig_probe(brw, 0.5 * bmin, 14, 2000);
    const auto hi = zbig_probe(brw, 0.9 * bmin, 14, 2000);
    EXPECT_GT(lo.lower, 0.0);
    EXPECT_LE(lo.lower, lo.fraction);
    EXPECT_GE(lo.upper, lo.fraction);
    EXPECT_LT(hi.fraction, lo.fraction);
}

TEST(Experiments, TableFormatting)
{
    Table t({"a", "b"});
    t.add(1, 0.1);
    std::ostringstream out;
    t.write(out);
    EXPECT_EQ(out.str(), "a,b\n1,0.10000000000000001\n");
}
