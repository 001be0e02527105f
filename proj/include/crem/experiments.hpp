#ifndef CREM_EXPERIMENTS_HPP
#define CREM_EXPERIMENTS_HPP

// Named, seeded experiments over parameter grids. Each one writes a CSV table
// and a JSON summary with one pass/fail entry per tolerance check.

#include "crem/covariance.hpp"
#include "crem/disorder.hpp"
#include "crem/io.hpp"
#include "crem/mcmc.hpp"
#include "crem/oracle.hpp"
#include "crem/parallel.hpp"
#include "crem/partition.hpp"
#include "crem/sequential.hpp"
#include "crem/stats.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crem
{

inline constexpr int kSummarySchemaVersion = 1;

struct ExperimentPlan
{
    std::string name;
    // Each entry is "brw", "grem:..." or a {"breakpoints": ...} object.
    std::vector<nlohmann::json> covariances{"brw"};
    std::vector<double> beta_multipliers{0.5}; // of beta_min
    std::vector<double> betas;                 // absolute values; used instead of multipliers when set
    std::vector<int> depths;
    std::vector<int> lookaheads;
    int m0 = 0;
    std::vector<long long> steps;
    std::size_t seeds = 100;
    std::uint64_t base_seed = 1;
    int extra_depth = 8;
    std::vector<double> s_values{0.0};
    bool level_boost = false;
    double se_band = 4.0;
    std::map<std::string, double> tolerances;
    std::string out_dir;
    unsigned workers = default_worker_count();

    double tolerance(const std::string& key) const
    {
        const auto it = tolerances.find(key);
        if (it == tolerances.end()) throw std::invalid_argument("plan '" + name + "' has no tolerance '" + key + "'");
        return it->second;
    }
};

inline nlohmann::json to_json(const ExperimentPlan& p)
{
    return {{"name", p.name},
            {"covariances", p.covariances},
            {"beta_multipliers", p.beta_multipliers},
            {"betas", p.betas},
            {"depths", p.depths},
            {"lookaheads", p.lookaheads},
            {"m0", p.m0},
            {"steps", p.steps},
            {"seeds", p.seeds},
            {"base_seed", p.base_seed},
            {"extra_depth", p.extra_depth},
            {"s_values", p.s_values},
            {"level_boost", p.level_boost},
            {"se_band", p.se_band},
            {"tolerances", p.tolerances},
            {"out", p.out_dir}};
}

/// Overlays the fields present in `doc` on `plan`.
inline ExperimentPlan apply_config(ExperimentPlan plan, const nlohmann::json& doc)
{
    if (!doc.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
    static const std::vector<std::string> known{"name",       "covariances", "beta_multipliers", "betas",
                                                "depths",     "lookaheads",  "m0",               "steps",
                                                "seeds",      "base_seed",   "extra_depth",      "s_values",
                                                "level_boost", "se_band",    "tolerances",       "out",
                                                "workers"};
    for (const auto& [key, _] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("unknown experiment config field '" + key + "'");
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key)) doc.at(key).get_to(field);
    };
    get("name", plan.name);
    get("covariances", plan.covariances);
    get("beta_multipliers", plan.beta_multipliers);
    get("betas", plan.betas);
    get("depths", plan.depths);
    get("lookaheads", plan.lookaheads);
    get("m0", plan.m0);
    get("steps", plan.steps);
    get("seeds", plan.seeds);
    get("base_seed", plan.base_seed);
    get("extra_depth", plan.extra_depth);
    get("s_values", plan.s_values);
    get("level_boost", plan.level_boost);
    get("se_band", plan.se_band);
    if (doc.contains("tolerances"))
        for (const auto& [key, value] : doc.at("tolerances").items()) plan.tolerances[key] = value.get<double>();
    get("out", plan.out_dir);
    get("workers", plan.workers);
    return plan;
}

struct Check
{
    std::string name;
    double value = 0.0;
    std::string relation; // "<=", "<", ">=", ">", "true"
    double threshold = 0.0;
    bool passed = false;
};

/// Fixed-column CSV table; numbers are printed with 17 significant digits.
class Table
{
public:
    explicit Table(std::vector<std::string> columns = {}) : columns_(std::move(columns)) {}

    const std::vector<std::string>& columns() const noexcept { return columns_; }
    std::size_t rows() const noexcept { return rows_.size(); }

    template <typename... Cells>
    void add(const Cells&... cells)
    {
        if (sizeof...(cells) != columns_.size()) throw std::logic_error("Table: row width does not match header");
        std::vector<std::string> row;
        (row.push_back(format(cells)), ...);
        rows_.push_back(std::move(row));
    }

    void write(std::ostream& out) const
    {
        for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
        out << '\n';
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
            out << '\n';
        }
    }

private:
    static std::string format(const std::string& s) { return s; }
    static std::string format(const char* s) { return s; }
    static std::string format(bool b) { return b ? "1" : "0"; }
    static std::string format(double x)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }
    template <typename Int>
        requires std::is_integral_v<Int>
    static std::string format(Int x)
    {
        return std::to_string(x);
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

struct ExperimentReport
{
    ExperimentPlan plan;
    std::vector<Check> checks;
    nlohmann::json metrics = nlohmann::json::object();
    Table table;
    double seconds = 0.0;

    bool passed() const
    {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }

    void check(std::string name, double value, const std::string& relation, double threshold)
    {
        bool ok = false;
        if (relation == "<=") ok = value <= threshold;
        else if (relation == "<") ok = value < threshold;
        else if (relation == ">=") ok = value >= threshold;
        else if (relation == ">") ok = value > threshold;
        else throw std::logic_error("unknown relation " + relation);
        checks.push_back({std::move(name), value, relation, threshold, ok});
    }

    void check_true(std::string name, bool ok)
    {
        checks.push_back({std::move(name), ok ? 1.0 : 0.0, "true", 1.0, ok});
    }

    nlohmann::json summary() const
    {
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& c : checks)
            cs.push_back({{"name", c.name},
                          {"value", c.value},
                          {"relation", c.relation},
                          {"threshold", c.threshold},
                          {"passed", c.passed}});
        return {{"schema_version", kSummarySchemaVersion},
                {"experiment", plan.name},
                {"passed", passed()},
                {"checks", cs},
                {"metrics", metrics},
                {"plan", to_json(plan)},
                {"seconds", seconds}};
    }
};

// ---------------------------------------------------------------------------
// Plan helpers.

namespace detail
{
inline CovarianceSpec plan_covariance(const nlohmann::json& entry, int depth)
{
    if (entry.is_string()) return parse_covariance(entry.get<std::string>(), depth);
    return covariance_from_json(entry);
}

inline std::string covariance_label(const nlohmann::json& entry)
{
    return entry.is_string() ? entry.get<std::string>() : entry.dump();
}

inline std::vector<double> plan_betas(const ExperimentPlan& plan, const CovarianceSpec& spec)
{
    if (!plan.betas.empty()) return plan.betas;
    const double beta_min = thresholds(spec).beta_min;
    std::vector<double> out;
    for (double m : plan.beta_multipliers) out.push_back(m * beta_min);
    return out;
}

inline std::uint64_t instance_seed(const ExperimentPlan& plan, std::size_t s) { return derive_seed(plan.base_seed, s); }

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw std::invalid_argument(what);
}

inline bool non_increasing(const std::vector<double>& xs)
{
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[i - 1]) return false;
    return true;
}

inline bool strictly_decreasing(const std::vector<double>& xs)
{
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] < xs[i - 1])) return false;
    return true;
}

inline int max_depth(const ExperimentPlan& plan)
{
    require(!plan.depths.empty(), "plan '" + plan.name + "' needs depths");
    return *std::max_element(plan.depths.begin(), plan.depths.end());
}
} // namespace detail

// ---------------------------------------------------------------------------
// Experiments.

/// Mean of the normalized partition function at each depth, and of its
/// increments between consecutive depths, against 1 and 0.
inline void experiment_martingale(const ExperimentPlan& plan, ExperimentReport& rep)
{
    const int big_n = detail::max_depth(plan);
    rep.table = Table({"covariance", "beta", "n", "quantity", "mean", "se", "pass"});
    for (const auto& cov : plan.covariances) {
        const auto spec = detail::plan_covariance(cov, big_n);
        const auto betas = detail::plan_betas(plan, spec);
        // zhat[s][b][k]: seed s, beta b, depth index k
        const auto zhat = map_indices(
            plan.seeds,
            [&](std::size_t s) {
                const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                std::vector<std::vector<double>> out;
                for (double beta : betas) {
                    const auto profile = exact_log_Z_profile(inst, big_n, beta);
                    std::vector<double> row;
                    for (int n : plan.depths)
                        row.push_back(std::exp(profile[static_cast<std::size_t>(n)] - annealed_log_Z(inst, n, beta)));
                    out.push_back(std::move(row));
                }
                return out;
            },
            plan.workers);
        for (std::size_t b = 0; b < betas.size(); ++b) {
            std::vector<double> col(plan.seeds);
            for (std::size_t k = 0; k < plan.depths.size(); ++k) {
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = zhat[s][b][k];
                const auto ms = stats::mean_se(col);
                const bool ok = ms.within(1.0, plan.se_band);
                rep.table.add(detail::covariance_label(cov), betas[b], plan.depths[k], "zhat", ms.mean, ms.se, ok);
                rep.check_true("mean_zhat " + detail::covariance_label(cov) + " beta=" + std::to_string(betas[b]) +
                                   " n=" + std::to_string(plan.depths[k]),
                               ok);
            }
            for (std::size_t k = 0; k + 1 < plan.depths.size(); ++k) {
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = zhat[s][b][k + 1] - zhat[s][b][k];
                const auto ms = stats::mean_se(col);
                const bool ok = ms.within(0.0, plan.se_band);
                rep.table.add(detail::covariance_label(cov), betas[b], plan.depths[k + 1], "increment", ms.mean, ms.se,
                              ok);
                rep.check_true("increment " + detail::covariance_label(cov) + " beta=" + std::to_string(betas[b]) +
                                   " n=" + std::to_string(plan.depths[k]) + "->" + std::to_string(plan.depths[k + 1]),
                               ok);
            }
        }
    }
}

/// Monte Carlo mean of Z_{beta,n} against 2^n exp(beta^2 a(n) / 2).
inline void experiment_annealed(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "N", "n", "mc_mean", "mc_se", "annealed", "pass"});
    const int big_n = detail::max_depth(plan);
    for (const auto& cov : plan.covariances) {
        const auto spec = detail::plan_covariance(cov, big_n);
        const auto betas = detail::plan_betas(plan, spec);
        for (int n : plan.depths) {
            const auto zs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    std::vector<double> out;
                    for (double beta : betas) out.push_back(std::exp(exact_log_Z(inst, n, beta)));
                    return out;
                },
                plan.workers);
            for (std::size_t b = 0; b < betas.size(); ++b) {
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = zs[s][b];
                const auto ms = stats::mean_se(col);
                const double expected = std::exp(annealed_log_Z(spec, big_n, n, betas[b]));
                const bool ok = ms.within(expected, plan.se_band);
                rep.table.add(detail::covariance_label(cov), betas[b], big_n, n, ms.mean, ms.se, expected, ok);
                rep.check_true("mean_Z " + detail::covariance_label(cov) + " beta=" + std::to_string(betas[b]) +
                                   " n=" + std::to_string(n),
                               ok);
            }
        }
    }
}

/// E max_{|v|=N} exp(beta X_v) against 2 exp(beta sqrt(2 ln2 N a(N))).
inline void experiment_maxleaf(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "N", "mean_max", "se", "bound", "pass"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            const auto betas = detail::plan_betas(plan, spec);
            const auto maxima = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    const auto e = inst.level_energies(big_n);
                    return *std::max_element(e.begin(), e.end());
                },
                plan.workers);
            for (double beta : betas) {
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = std::exp(beta * maxima[s]);
                const auto ms = stats::mean_se(col);
                const double a_n = spec.scaled(big_n, big_n);
                const double bound = 2.0 * std::exp(beta * std::sqrt(2.0 * kLn2 * big_n * a_n));
                const bool ok = ms.mean <= bound;
                rep.table.add(detail::covariance_label(cov), beta, big_n, ms.mean, ms.se, bound, ok);
                rep.check("mean_max " + detail::covariance_label(cov) + " beta=" + std::to_string(beta) +
                              " N=" + std::to_string(big_n),
                          ms.mean, "<=", bound);
            }
        }
    }
}

/// Tail of |ln Z - mean ln Z| against 2 exp(-x^2 / (4 a(N))).
inline void experiment_concentration(const ExperimentPlan& plan, ExperimentReport& rep)
{
    const auto xs = std::vector<double>{2.0, 4.0, 8.0};
    rep.table = Table({"covariance", "beta", "N", "x", "tail", "bound", "pass"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            const auto betas = detail::plan_betas(plan, spec);
            const auto logs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    std::vector<double> out;
                    for (double beta : betas) out.push_back(exact_log_Z(inst, big_n, beta));
                    return out;
                },
                plan.workers);
            for (std::size_t b = 0; b < betas.size(); ++b) {
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = logs[s][b];
                const double mean = stats::mean_se(col).mean;
                const double a_n = spec.scaled(big_n, big_n);
                for (double x : xs) {
                    std::size_t hits = 0;
                    for (double v : col) hits += std::fabs(v - mean) >= x ? 1 : 0;
                    const double tail = static_cast<double>(hits) / static_cast<double>(plan.seeds);
                    const double bound = 2.0 * std::exp(-x * x / (4.0 * a_n));
                    rep.table.add(detail::covariance_label(cov), betas[b], big_n, x, tail, bound, tail <= bound);
                    rep.check("tail " + detail::covariance_label(cov) + " beta=" + std::to_string(betas[b]) +
                                  " N=" + std::to_string(big_n) + " x=" + std::to_string(x),
                              tail, "<=", bound);
                }
            }
        }
    }
}

/// |Zhat_m / Zhat_N - 1| for lookahead depths m at a fixed N.
inline void experiment_zratio(const ExperimentPlan& plan, ExperimentReport& rep)
{
    detail::require(plan.depths.size() == 1, "zratio: exactly one depth N");
    const int big_n = plan.depths.front();
    rep.table = Table({"covariance", "beta", "seed", "m", "abs_ratio_error"});
    for (const auto& cov : plan.covariances) {
        const auto spec = detail::plan_covariance(cov, big_n);
        for (double beta : detail::plan_betas(plan, spec)) {
            const auto errs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    const auto profile = exact_log_Z_profile(inst, big_n, beta);
                    const double log_full = profile.back() - annealed_log_Z(inst, big_n, beta);
                    std::vector<double> out;
                    for (int m : plan.lookaheads) {
                        const double log_m = profile.at(static_cast<std::size_t>(m)) - annealed_log_Z(inst, m, beta);
                        out.push_back(std::fabs(std::expm1(log_m - log_full)));
                    }
                    return out;
                },
                plan.workers);
            std::vector<double> p90s, medians;
            for (std::size_t k = 0; k < plan.lookaheads.size(); ++k) {
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) {
                    col[s] = errs[s][k];
                    rep.table.add(detail::covariance_label(cov), beta, s, plan.lookaheads[k], col[s]);
                }
                p90s.push_back(stats::quantile(col, 0.9));
                medians.push_back(stats::median(col));
            }
            const std::string key = detail::covariance_label(cov) + " beta=" + std::to_string(beta);
            rep.metrics[key] = {{"m", plan.lookaheads}, {"p90", p90s}, {"median", medians}};
            rep.check_true("p90 decreasing in m " + key, detail::strictly_decreasing(p90s));
            rep.check_true("median decreasing in m " + key, detail::strictly_decreasing(medians));
        }
    }
}

/// TV of the sequential sampler's exact law to the Gibbs measure, per lookahead.
inline void experiment_seq_tv(const ExperimentPlan& plan, ExperimentReport& rep)
{
    detail::require(plan.depths.size() == 1, "seq-tv: exactly one depth N");
    const int big_n = plan.depths.front();
    const int probe_m = static_cast<int>(plan.tolerance("probe_m"));
    const double max_tv = plan.tolerance("max_tv");
    rep.table = Table({"covariance", "beta", "seed", "m", "tv"});
    for (const auto& cov : plan.covariances) {
        const auto spec = detail::plan_covariance(cov, big_n);
        for (double beta : detail::plan_betas(plan, spec)) {
            const auto tvs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    const auto gibbs = exact_gibbs(inst, big_n, beta);
                    std::vector<double> out;
                    for (int m : plan.lookaheads) out.push_back(tv(sampler_law(inst, {m, beta, 0}), gibbs));
                    return out;
                },
                plan.workers);
            std::vector<double> medians;
            for (std::size_t k = 0; k < plan.lookaheads.size(); ++k) {
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) {
                    col[s] = tvs[s][k];
                    rep.table.add(detail::covariance_label(cov), beta, s, plan.lookaheads[k], col[s]);
                }
                medians.push_back(stats::median(col));
            }
            const std::string key = detail::covariance_label(cov) + " beta=" + std::to_string(beta);
            rep.metrics[key] = {{"m", plan.lookaheads}, {"median_tv", medians}};
            rep.check_true("median TV non-increasing in m " + key, detail::non_increasing(medians));
            const auto it = std::find(plan.lookaheads.begin(), plan.lookaheads.end(), probe_m);
            detail::require(it != plan.lookaheads.end(), "seq-tv: probe_m must be one of the lookaheads");
            rep.check("median TV at m=" + std::to_string(probe_m) + " " + key,
                      medians[static_cast<std::size_t>(it - plan.lookaheads.begin())], "<=", max_tv);
        }
    }
}

/// Full-lookahead sampler law against exact Gibbs (should agree to rounding).
inline void experiment_seq_exact(const ExperimentPlan& plan, ExperimentReport& rep)
{
    const double tol = plan.tolerance("max_tv");
    rep.table = Table({"covariance", "beta", "N", "seed", "tv"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            const auto betas = detail::plan_betas(plan, spec);
            const auto tvs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    std::vector<double> out;
                    for (double beta : betas)
                        out.push_back(tv(sampler_law(inst, {big_n, beta, 0}), exact_gibbs(inst, big_n, beta)));
                    return out;
                },
                plan.workers);
            for (std::size_t b = 0; b < betas.size(); ++b) {
                double worst = 0.0;
                for (std::size_t s = 0; s < plan.seeds; ++s) {
                    rep.table.add(detail::covariance_label(cov), betas[b], big_n, s, tvs[s][b]);
                    worst = std::max(worst, tvs[s][b]);
                }
                rep.check("max TV " + detail::covariance_label(cov) + " beta=" + std::to_string(betas[b]) +
                              " N=" + std::to_string(big_n),
                          worst, "<=", tol);
            }
        }
    }
}

namespace detail
{
// Strictly increasing integer grid from 1 to t_max, roughly 10% apart.
inline std::vector<long long> step_grid(long long t_max)
{
    std::vector<long long> grid;
    double t = 1.0;
    while (static_cast<long long>(t) <= t_max) {
        const auto k = static_cast<long long>(t);
        if (grid.empty() || k > grid.back()) grid.push_back(k);
        t *= 1.1;
    }
    if (grid.empty() || grid.back() != t_max) grid.push_back(t_max);
    return grid;
}
} // namespace detail

/// Exact matrix-power analysis of the tree chain: detailed balance, and the
/// first T on a grid at which the depth-N conditional law is within max_tv of
/// the Gibbs measure.
inline void experiment_mcmc_tv(const ExperimentPlan& plan, ExperimentReport& rep)
{
    const double max_tv = plan.tolerance("max_tv");
    const double balance_tol = plan.tolerance("detailed_balance");
    detail::require(plan.steps.size() == 1, "mcmc-tv: steps holds the single horizon T_max");
    const auto grid = detail::step_grid(plan.steps.front());
    rep.table = Table({"covariance", "beta", "N", "seed", "balance_error", "row_error", "first_T", "tv_at_first_T",
                       "tv_monotone"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            for (double beta : detail::plan_betas(plan, spec)) {
                struct Row
                {
                    double balance, rows, tv;
                    long long first_t;
                    bool monotone;
                };
                const auto results = map_indices(
                    plan.seeds,
                    [&](std::size_t s) {
                        const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                        const auto t = transition_matrix(inst, std::min(plan.m0, big_n), beta, plan.level_boost);
                        const auto gibbs = exact_gibbs(inst, big_n, beta);
                        Row row{t.max_detailed_balance_error(), t.max_row_sum_error(), 1.0, -1, true};
                        std::vector<double> dist(t.size(), 0.0), next;
                        dist[0] = 1.0;
                        double prev_full = 1.0;
                        long long now = 0;
                        for (long long target : grid) {
                            for (; now < target; ++now) {
                                t.step(dist, next);
                                dist.swap(next);
                            }
                            double full = 0.0;
                            for (std::size_t i = 0; i < dist.size(); ++i) full += std::fabs(dist[i] - t.pi()[i]);
                            full *= 0.5;
                            if (full > prev_full + 1e-12) row.monotone = false;
                            prev_full = full;
                            double level_mass = 0.0;
                            const std::size_t first = (std::size_t{1} << big_n) - 1;
                            for (std::size_t i = first; i < dist.size(); ++i) level_mass += dist[i];
                            if (!(level_mass > 0.0)) continue;
                            const double d = tv(TransitionMatrixView::level_law(dist, big_n), gibbs);
                            if (d <= max_tv) {
                                row.first_t = target;
                                row.tv = d;
                                break;
                            }
                        }
                        return row;
                    },
                    plan.workers);
                double worst_balance = 0.0, worst_rows = 0.0;
                long long worst_t = 0;
                bool all_reached = true, all_monotone = true;
                for (std::size_t s = 0; s < plan.seeds; ++s) {
                    const auto& r = results[s];
                    rep.table.add(detail::covariance_label(cov), beta, big_n, s, r.balance, r.rows, r.first_t, r.tv,
                                  r.monotone);
                    worst_balance = std::max(worst_balance, r.balance);
                    worst_rows = std::max(worst_rows, r.rows);
                    all_reached = all_reached && r.first_t > 0;
                    all_monotone = all_monotone && r.monotone;
                    worst_t = std::max(worst_t, r.first_t);
                }
                const std::string key =
                    detail::covariance_label(cov) + " beta=" + std::to_string(beta) + " N=" + std::to_string(big_n);
                rep.metrics[key] = {{"max_first_T", worst_t}};
                rep.check("detailed balance " + key, worst_balance, "<=", balance_tol);
                rep.check("row sums " + key, worst_rows, "<=", balance_tol);
                rep.check_true("TV to Gibbs <= " + std::to_string(max_tv) + " within T_max " + key, all_reached);
                rep.check_true("TV to pi non-increasing in T " + key, all_monotone);
            }
        }
    }
}

/// Median spectral gap of the tree chain over seeds, per depth.
inline void experiment_gap_decay(const ExperimentPlan& plan, ExperimentReport& rep)
{
    const double max_slope = plan.tolerance("max_slope");
    rep.table = Table({"covariance", "beta", "seed", "N", "gap"});
    for (const auto& cov : plan.covariances) {
        const auto spec0 = detail::plan_covariance(cov, plan.depths.front());
        for (double beta : detail::plan_betas(plan, spec0)) {
            std::vector<double> ns, log_medians, medians;
            for (int big_n : plan.depths) {
                const auto spec = detail::plan_covariance(cov, big_n);
                const auto gaps = map_indices(
                    plan.seeds,
                    [&](std::size_t s) {
                        const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                        return spectral_gap(transition_matrix(inst, std::min(plan.m0, big_n), beta, plan.level_boost));
                    },
                    plan.workers);
                for (std::size_t s = 0; s < plan.seeds; ++s)
                    rep.table.add(detail::covariance_label(cov), beta, s, big_n, gaps[s]);
                const double med = stats::median(gaps);
                ns.push_back(big_n);
                medians.push_back(med);
                log_medians.push_back(std::log(med));
            }
            const double slope = stats::ols_slope(ns, log_medians);
            const std::string key = detail::covariance_label(cov) + " beta=" + std::to_string(beta);
            rep.metrics[key] = {{"N", plan.depths}, {"median_gap", medians}, {"log_gap_slope", slope}};
            rep.check_true("median gap strictly decreasing in N " + key, detail::strictly_decreasing(medians));
            rep.check("log median gap slope " + key, slope, "<", max_slope);
        }
    }
}

/// Change-of-measure check for the tilted subtree at depth n + extra_depth.
inline void experiment_tilt(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "n", "bin", "z", "f", "f_se", "direct", "via_density", "diff_se", "agree"});
    for (const auto& cov : plan.covariances) {
        for (int n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, n + plan.extra_depth);
            for (double beta : detail::plan_betas(plan, spec)) {
                TiltOptions opts;
                opts.base_seed = plan.base_seed;
                opts.se_band = plan.se_band;
                opts.workers = plan.workers;
                const auto r = tilt_density_check(spec, beta, n, plan.extra_depth, plan.seeds, opts);
                for (std::size_t k = 0; k < r.bins.size(); ++k) {
                    const auto& b = r.bins[k];
                    rep.table.add(detail::covariance_label(cov), beta, n, k, b.z, b.f, b.f_se, b.direct, b.via_density,
                                  b.diff_se, b.agree);
                }
                const std::string key =
                    detail::covariance_label(cov) + " beta=" + std::to_string(beta) + " n=" + std::to_string(n);
                std::size_t agreeing = 0;
                for (const auto& b : r.bins) agreeing += b.agree ? 1 : 0;
                rep.metrics[key] = {{"bins", r.bins.size()},
                                    {"agreeing_bins", agreeing},
                                    {"density_mass", r.density_mass},
                                    {"density_mass_se", r.density_mass_se}};
                rep.check_true("estimators agree on every bin " + key, r.all_bins_agree);
                rep.check_true("f_n non-decreasing " + key, r.monotone);
                rep.check_true("E_P f_n = 1 " + key, r.mass_ok);
            }
        }
    }
}

/// E|Zhat_N - 1|^p against 2^{4p+1} / ((p-1)(2 ln 2 - p beta^2 a_max)).
inline void experiment_moments(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "N", "p", "moment", "se", "bound", "pass"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            const auto thr = thresholds(spec);
            const auto betas = detail::plan_betas(plan, spec);
            const auto logs = map_indices(
                plan.seeds,
                [&](std::size_t s) {
                    const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                    std::vector<double> out;
                    for (double beta : betas) out.push_back(normalized_log_Z(inst, big_n, beta));
                    return out;
                },
                plan.workers);
            for (std::size_t b = 0; b < betas.size(); ++b) {
                const double beta = betas[b];
                const double p = std::min((1.0 + 2.0 * kLn2 / (beta * beta * thr.a_max)) / 2.0, 2.0);
                const double bound =
                    std::pow(2.0, 4.0 * p + 1.0) / ((p - 1.0) * (2.0 * kLn2 - p * beta * beta * thr.a_max));
                std::vector<double> col(plan.seeds);
                for (std::size_t s = 0; s < plan.seeds; ++s) col[s] = std::pow(std::fabs(std::expm1(logs[s][b])), p);
                const auto ms = stats::mean_se(col);
                rep.table.add(detail::covariance_label(cov), beta, big_n, p, ms.mean, ms.se, bound, ms.mean <= bound);
                rep.check("moment " + detail::covariance_label(cov) + " beta=" + std::to_string(beta) +
                              " N=" + std::to_string(big_n),
                          ms.mean, "<=", bound);
            }
        }
    }
}

struct ZbigProbe
{
    double fraction = 0.0;
    double lower = 0.0; // Wilson score interval at z = 4
    double upper = 0.0;
    std::size_t seeds = 0;
};

/// Fraction of instances with Zhat_N > threshold, with a Wilson interval.
inline ZbigProbe zbig_probe(const CovarianceSpec& spec, double beta, int depth, std::size_t seeds,
                            std::uint64_t base_seed = 1, double threshold = 0.5,
                            unsigned workers = default_worker_count())
{
    if (depth > 20) throw std::out_of_range("zbig_probe: depth above 20");
    if (seeds == 0) throw std::invalid_argument("zbig_probe: need seeds > 0");
    const auto hits = map_indices(
        seeds,
        [&](std::size_t s) {
            const CremInstance inst(derive_seed(base_seed, s), depth, spec);
            return normalized_log_Z(inst, depth, beta) > std::log(threshold) ? 1 : 0;
        },
        workers);
    std::size_t k = 0;
    for (int h : hits) k += static_cast<std::size_t>(h);
    ZbigProbe out;
    out.seeds = seeds;
    const double n = static_cast<double>(seeds);
    out.fraction = static_cast<double>(k) / n;
    const double z = 4.0;
    const double centre = (out.fraction + z * z / (2 * n)) / (1 + z * z / n);
    const double half = z / (1 + z * z / n) * std::sqrt(out.fraction * (1 - out.fraction) / n + z * z / (4 * n * n));
    out.lower = std::max(0.0, centre - half);
    out.upper = std::min(1.0, centre + half);
    return out;
}

/// P(Zhat_N > 1/2) per beta; positive with margin, and not increasing in beta.
inline void experiment_zbig(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "N", "fraction", "lower", "upper"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            auto betas = detail::plan_betas(plan, spec);
            std::sort(betas.begin(), betas.end());
            std::vector<double> fractions;
            for (double beta : betas) {
                const auto probe = zbig_probe(spec, beta, big_n, plan.seeds, plan.base_seed, 0.5, plan.workers);
                rep.table.add(detail::covariance_label(cov), beta, big_n, probe.fraction, probe.lower, probe.upper);
                fractions.push_back(probe.fraction);
                rep.check("lower bound of P(Zhat > 1/2) " + detail::covariance_label(cov) +
                              " beta=" + std::to_string(beta) + " N=" + std::to_string(big_n),
                          probe.lower, ">", 0.0);
            }
            rep.check_true("P(Zhat > 1/2) non-increasing in beta " + detail::covariance_label(cov) +
                               " N=" + std::to_string(big_n),
                           detail::non_increasing(fractions));
        }
    }
}

/// Exhaustive s-conductance against the subtree-union lower bound.
inline void experiment_conductance(const ExperimentPlan& plan, ExperimentReport& rep)
{
    rep.table = Table({"covariance", "beta", "N", "s", "seed", "exhaustive", "subtree_lower_bound", "best_subtree_cut",
                       "pass"});
    for (const auto& cov : plan.covariances) {
        for (int big_n : plan.depths) {
            const auto spec = detail::plan_covariance(cov, big_n);
            for (double beta : detail::plan_betas(plan, spec)) {
                for (double s_val : plan.s_values) {
                    struct Row
                    {
                        double exhaustive, bound, best;
                    };
                    const auto rows = map_indices(
                        plan.seeds,
                        [&](std::size_t s) {
                            const CremInstance inst(detail::instance_seed(plan, s), big_n, spec);
                            const auto t = transition_matrix(inst, std::min(plan.m0, big_n), beta, plan.level_boost);
                            const auto scan = subtree_conductance_scan(t, s_val);
                            return Row{exhaustive_conductance(t, s_val), scan.lower_bound.value,
                                       scan.best_cut ? scan.best_cut->value
                                                     : std::numeric_limits<double>::infinity()};
                        },
                        plan.workers);
                    double worst = std::numeric_limits<double>::infinity();
                    for (std::size_t s = 0; s < plan.seeds; ++s) {
                        const auto& r = rows[s];
                        rep.table.add(detail::covariance_label(cov), beta, big_n, s_val, s, r.exhaustive, r.bound,
                                      r.best, r.exhaustive >= r.bound);
                        worst = std::min(worst, r.exhaustive / r.bound);
                    }
                    rep.check("min exhaustive / subtree bound " + detail::covariance_label(cov) +
                                  " beta=" + std::to_string(beta) + " N=" + std::to_string(big_n) +
                                  " s=" + std::to_string(s_val),
                              worst, ">=", 1.0 - plan.tolerance("relative_slack"));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Registry.

using ExperimentFn = std::function<void(const ExperimentPlan&, ExperimentReport&)>;

struct ExperimentEntry
{
    ExperimentFn fn;
    ExperimentPlan defaults;
};

namespace detail
{
inline nlohmann::json convex_grem2()
{
    return {{"breakpoints", {{0.0, 0.0}, {0.5, 0.25}, {1.0, 1.0}}}};
}

inline std::map<std::string, ExperimentEntry> make_registry()
{
    std::map<std::string, ExperimentEntry> r;
    auto plan = [](std::string name) {
        ExperimentPlan p;
        p.name = std::move(name);
        return p;
    };
    {
        auto p = plan("martingale");
        p.covariances = {"brw", convex_grem2()};
        p.beta_multipliers = {0.5, 0.8};
        p.depths = {5, 10, 15};
        p.seeds = 10000;
        r["martingale"] = {experiment_martingale, p};
    }
    {
        auto p = plan("annealedZ");
        p.covariances = {"brw"};
        p.beta_multipliers = {};
        p.betas = {0.5};
        p.depths = {8};
        p.seeds = 10000;
        r["annealedZ"] = {experiment_annealed, p};
    }
    {
        auto p = plan("maxleaf");
        p.beta_multipliers = {0.5, 1.0};
        p.depths = {10, 16, 20};
        p.seeds = 1000;
        r["maxleaf"] = {experiment_maxleaf, p};
    }
    {
        auto p = plan("concentration");
        p.beta_multipliers = {0.5};
        p.depths = {20};
        p.seeds = 10000;
        r["concentration"] = {experiment_concentration, p};
    }
    {
        auto p = plan("zratio");
        p.beta_multipliers = {0.5};
        p.depths = {20};
        p.lookaheads = {4, 8, 12, 16};
        p.seeds = 200;
        r["zratio"] = {experiment_zratio, p};
    }
    {
        auto p = plan("seq-tv");
        p.beta_multipliers = {0.5};
        p.depths = {12};
        p.lookaheads = {1, 2, 4, 8, 12};
        p.seeds = 50;
        p.tolerances = {{"probe_m", 8}, {"max_tv", 0.05}};
        r["seq-tv"] = {experiment_seq_tv, p};
    }
    {
        auto p = plan("seq-exact");
        p.covariances = {"brw", convex_grem2()};
        p.beta_multipliers = {0.3, 0.6, 0.9};
        p.depths = {12};
        p.seeds = 20;
        p.tolerances = {{"max_tv", 1e-12}};
        r["seq-exact"] = {experiment_seq_exact, p};
    }
    {
        auto p = plan("mcmc-tv");
        p.beta_multipliers = {0.5};
        p.depths = {8};
        p.m0 = 2;
        p.steps = {1000000};
        p.seeds = 20;
        p.tolerances = {{"max_tv", 0.05}, {"detailed_balance", 1e-12}};
        r["mcmc-tv"] = {experiment_mcmc_tv, p};
    }
    {
        auto p = plan("gap-decay");
        p.beta_multipliers = {};
        p.betas = {1.0};
        p.depths = {4, 5, 6, 7, 8, 9, 10};
        p.seeds = 50;
        p.tolerances = {{"max_slope", -0.05}};
        r["gap-decay"] = {experiment_gap_decay, p};
    }
    {
        auto p = plan("tilt");
        p.beta_multipliers = {0.5};
        p.depths = {3};
        p.extra_depth = 8;
        p.seeds = 100000;
        r["tilt"] = {experiment_tilt, p};
    }
    {
        auto p = plan("moments");
        p.beta_multipliers = {0.5};
        p.depths = {20};
        p.seeds = 10000;
        r["moments"] = {experiment_moments, p};
    }
    {
        auto p = plan("zbig");
        p.beta_multipliers = {0.5, 0.9};
        p.depths = {16};
        p.seeds = 2000;
        r["zbig"] = {experiment_zbig, p};
    }
    {
        auto p = plan("conductance");
        p.beta_multipliers = {0.5};
        p.depths = {2, 3, 4};
        p.seeds = 20;
        p.s_values = {0.0, 0.05};
        p.tolerances = {{"relative_slack", 1e-9}};
        r["conductance"] = {experiment_conductance, p};
    }
    return r;
}
} // namespace detail

inline const std::map<std::string, ExperimentEntry>& experiment_registry()
{
    static const auto registry = detail::make_registry();
    return registry;
}

inline std::vector<std::string> experiment_names()
{
    std::vector<std::string> out;
    for (const auto& [name, _] : experiment_registry()) out.push_back(name);
    return out;
}

inline ExperimentPlan default_plan(const std::string& name)
{
    const auto& reg = experiment_registry();
    const auto it = reg.find(name);
    if (it == reg.end()) throw std::invalid_argument("unknown experiment '" + name + "'");
    return it->second.defaults;
}

inline void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto csv_path = dir / (report.plan.name + ".csv");
    const auto json_path = dir / (report.plan.name + ".json");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    report.table.write(csv);
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + json_path.string());
    js << report.summary().dump(2) << '\n';
    if (!csv || !js) throw std::runtime_error("write failed in " + dir.string());
}

/// Runs a registered experiment; writes NAME.csv and NAME.json when out_dir is set.
inline ExperimentReport run(const ExperimentPlan& plan)
{
    const auto& reg = experiment_registry();
    const auto it = reg.find(plan.name);
    if (it == reg.end()) throw std::invalid_argument("unknown experiment '" + plan.name + "'");
    if (plan.seeds == 0) throw std::invalid_argument("plan needs seeds > 0");
    ExperimentReport report;
    report.plan = plan;
    const auto start = std::chrono::steady_clock::now();
    it->second.fn(plan, report);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!plan.out_dir.empty()) write_outputs(report, plan.out_dir);
    return report;
}

} // namespace crem

#endif // CREM_EXPERIMENTS_HPP
