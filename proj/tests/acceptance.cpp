// Runs every acceptance criterion through its registered experiment with the
// default (full-scale) plan and prints one PASS/FAIL line per criterion.
//
//   crem_acceptance            all criteria
//   crem_acceptance 3 7        selected criteria
//   crem_acceptance --out DIR  also write each experiment's CSV/JSON

#include "crem/experiments.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

namespace
{

struct Criterion
{
    int id;
    const char* experiment;
    const char* what;
    double budget_seconds;
};

const std::vector<Criterion> kCriteria{
    {1, "seq-exact", "full lookahead reproduces the Gibbs law (TV <= 1e-12)", 60},
    {2, "seq-tv", "median sampler TV non-increasing in m, <= 0.05 at m=8", 600},
    {3, "mcmc-tv", "detailed balance and matrix-power TV <= 0.05 within 1e6 steps", 600},
    {4, "zratio", "p90 of |Zhat_m/Zhat_N - 1| decreasing in m", 900},
    {5, "martingale", "mean Zhat_n within 4 SE of 1", 300},
    {6, "annealedZ", "mean Z_8 within 4 SE of 2^8 exp(beta^2 a(8)/2)", 60},
    {7, "moments", "E|Zhat_N - 1|^p below the moment bound", 300},
    {8, "maxleaf", "E max exp(beta X) below 2 exp(beta sqrt(2 ln2 N a(N)))", 300},
    {9, "concentration", "tail of |ln Z - mean| below 2 exp(-x^2/(4 a(N)))", 300},
    {10, "gap-decay", "median spectral gap strictly decreasing, log-slope < -0.05", 600},
    {11, "tilt", "two change-of-measure estimators agree on all bins", 900},
    {12, "conductance", "exhaustive conductance >= subtree-union bound", 60},
};

} // namespace

int main(int argc, char** argv)
{
    std::set<int> selected;
    std::string out_dir;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) {
            out_dir = argv[++i];
        } else {
            selected.insert(std::atoi(arg.c_str()));
        }
    }

    int failures = 0;
    for (const auto& c : kCriteria) {
        if (!selected.empty() && !selected.contains(c.id)) continue;
        bool ok = false;
        double seconds = 0.0;
        std::string detail;
        try {
            auto plan = crem::default_plan(c.experiment);
            if (!out_dir.empty()) plan.out_dir = out_dir;
            const auto report = crem::run(plan);
            seconds = report.seconds;
            ok = report.passed() && seconds < c.budget_seconds;
            for (const auto& check : report.checks)
                if (!check.passed) detail += "\n    failed: " + check.name;
            if (seconds >= c.budget_seconds) detail += "\n    over the runtime budget";
        } catch (const std::exception& e) {
            detail = std::string("\n    error: ") + e.what();
        }
        std::printf("%s criterion %d [%s] %s (%.1f s, budget %.0f s)%s\n", ok ? "PASS" : "FAIL", c.id, c.experiment,
                    c.what, seconds, c.budget_seconds, detail.c_str());
        std::fflush(stdout);
        failures += ok ? 0 : 1;
    }
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
