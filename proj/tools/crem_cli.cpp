// Command-line front end: partition functions, samplers, spectra, oracles,
// experiments and instance dumps.

#include "crem/covariance.hpp"
#include "crem/disorder.hpp"
#include "crem/experiments.hpp"
#include "crem/io.hpp"
#include "crem/mcmc.hpp"
#include "crem/oracle.hpp"
#include "crem/partition.hpp"
#include "crem/sequential.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using nlohmann::json;

namespace
{

struct InstanceArgs
{
    std::uint64_t seed = 1;
    int depth = 10;
    std::string covariance = "brw";
};

struct BetaArgs
{
    std::optional<double> beta;
    std::optional<double> beta_mult;

    double resolve(const crem::CovarianceSpec& spec) const
    {
        if (beta && beta_mult) throw std::invalid_argument("give --beta or --beta-mult, not both");
        if (beta) return *beta;
        if (beta_mult) return *beta_mult * crem::thresholds(spec).beta_min;
        throw std::invalid_argument("one of --beta or --beta-mult is required");
    }
};

void add_instance(CLI::App* app, InstanceArgs& a, bool with_seed = true)
{
    if (with_seed) app->add_option("--seed", a.seed, "disorder seed");
    app->add_option("--depth", a.depth, "tree depth N")->check(CLI::Range(0, crem::VertexId::kMaxDepth));
    app->add_option("--covariance", a.covariance, "brw, grem:a0,s1:e1,..., or a JSON file");
}

void add_beta(CLI::App* app, BetaArgs& b)
{
    app->add_option("--beta", b.beta, "inverse temperature");
    app->add_option("--beta-mult", b.beta_mult, "inverse temperature as a multiple of beta_min");
}

std::string bits_or_null(const std::optional<crem::VertexId>& v) { return v ? v->to_string() : std::string{}; }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Samplers and diagnostics for the continuous random energy model"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "crem 1.0.0");

    // partition ------------------------------------------------------------
    InstanceArgs part_inst;
    BetaArgs part_beta;
    std::string part_op = "exact";
    int part_n = -1;
    std::string part_vertex;
    int part_m = 0;
    auto* part = app.add_subcommand("partition", "partition functions in log scale");
    add_instance(part, part_inst);
    add_beta(part, part_beta);
    part->add_option("--op", part_op, "exact | annealed | normalized | subtree")
        ->check(CLI::IsMember({"exact", "annealed", "normalized", "subtree"}));
    part->add_option("--n", part_n, "level (default N)");
    part->add_option("--vertex", part_vertex, "subtree root as a bit string (op subtree)");
    part->add_option("--m", part_m, "subtree depth (op subtree)");

    // sample ----------------------------------------------------------------
    auto* sample = app.add_subcommand("sample", "draw leaves with one of the samplers");
    sample->require_subcommand(1);

    InstanceArgs mc_inst;
    BetaArgs mc_beta;
    crem::ChainConfig mc_cfg;
    mc_cfg.steps = 10000;
    std::uint64_t mc_path_seed = 0;
    std::size_t mc_replicas = 1;
    auto* mcmc = sample->add_subcommand("mcmc", "tree Metropolis chain; JSON line per replica");
    add_instance(mcmc, mc_inst);
    add_beta(mcmc, mc_beta);
    mcmc->add_option("--m0", mc_cfg.m0, "conditioning depth")->check(CLI::NonNegativeNumber);
    mcmc->add_option("--steps", mc_cfg.steps, "chain length T")->check(CLI::NonNegativeNumber);
    mcmc->add_option("--retries", mc_cfg.max_retries, "runs per replica before giving up")
        ->check(CLI::PositiveNumber);
    mcmc->add_option("--replicas", mc_replicas, "independent replicas");
    mcmc->add_option("--path-seed", mc_path_seed, "seed of the chain randomness");
    mcmc->add_flag("--level-boost", mc_cfg.level_boost, "multiply depth-N weights by N");

    InstanceArgs seq_inst;
    BetaArgs seq_beta;
    std::optional<int> seq_m;
    std::uint64_t seq_path_seed = 0;
    std::size_t seq_replicas = 1;
    double seq_eps = 0.1, seq_delta = 0.1, seq_c = 1.0;
    auto* seq = sample->add_subcommand("seq", "sequential sampler with lookahead; JSON line per replica");
    add_instance(seq, seq_inst);
    add_beta(seq, seq_beta);
    seq->add_option("--lookahead", seq_m, "lookahead depth m (default from --epsilon/--delta)");
    seq->add_option("--path-seed", seq_path_seed, "seed of the sampling path");
    seq->add_option("--replicas", seq_replicas, "independent draws");
    seq->add_option("--epsilon", seq_eps, "target accuracy for the default lookahead");
    seq->add_option("--delta", seq_delta, "failure probability for the default lookahead");
    seq->add_option("--constant", seq_c, "constant C in the lookahead formula");

    // spectrum ---------------------------------------------------------------
    InstanceArgs spec_inst;
    BetaArgs spec_beta;
    std::size_t spec_seeds = 1;
    int spec_m0 = 0;
    bool spec_boost = false;
    auto* spectrum = app.add_subcommand("spectrum", "spectral gap of the tree chain; CSV seed,N,gap");
    add_instance(spectrum, spec_inst);
    add_beta(spectrum, spec_beta);
    spectrum->add_option("--seeds", spec_seeds, "number of instances, seeds seed .. seed+K-1");
    spectrum->add_option("--m0", spec_m0, "conditioning depth");
    spectrum->add_flag("--level-boost", spec_boost, "multiply depth-N weights by N");

    // oracle -----------------------------------------------------------------
    auto* oracle = app.add_subcommand("oracle", "exact small-depth ground truth");
    oracle->require_subcommand(1);

    InstanceArgs gibbs_inst;
    BetaArgs gibbs_beta;
    int gibbs_n = -1;
    std::string gibbs_format = "json";
    auto* gibbs = oracle->add_subcommand("gibbs", "exact Gibbs measure at a level");
    add_instance(gibbs, gibbs_inst);
    add_beta(gibbs, gibbs_beta);
    gibbs->add_option("--n", gibbs_n, "level (default N)");
    gibbs->add_option("--format", gibbs_format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

    InstanceArgs tv_inst;
    BetaArgs tv_beta;
    std::string tv_p, tv_q;
    std::optional<int> tv_m;
    auto* tvcmd = oracle->add_subcommand("tv", "total variation between two CSV laws, or sampler law vs Gibbs");
    add_instance(tvcmd, tv_inst);
    add_beta(tvcmd, tv_beta);
    tvcmd->add_option("--p", tv_p, "CSV distribution (bits,prob)");
    tvcmd->add_option("--q", tv_q, "CSV distribution (bits,prob)");
    tvcmd->add_option("--lookahead", tv_m, "compare the sequential sampler's law with lookahead m to Gibbs");

    InstanceArgs tilt_inst;
    BetaArgs tilt_beta;
    int tilt_n = 3, tilt_extra = 8;
    std::size_t tilt_seeds = 1000;
    auto* tilt = oracle->add_subcommand("tilt", "density check for the tilted subtree law");
    add_instance(tilt, tilt_inst);
    add_beta(tilt, tilt_beta);
    tilt->add_option("--n", tilt_n, "prefix depth n");
    tilt->add_option("--extra-depth", tilt_extra, "subtree depth below the prefix");
    tilt->add_option("--seeds", tilt_seeds, "disorder samples");

    // experiment ---------------------------------------------------------------
    auto* experiment = app.add_subcommand("experiment", "registered experiments");
    experiment->require_subcommand(1);
    std::string exp_name, exp_config, exp_out;
    auto* exp_run = experiment->add_subcommand("run", "run one experiment; exit code 0 iff every check passes");
    exp_run->add_option("name", exp_name, "experiment name")->required();
    exp_run->add_option("--config", exp_config, "JSON plan overriding the defaults");
    exp_run->add_option("--out", exp_out, "output directory for NAME.csv and NAME.json");
    auto* exp_list = experiment->add_subcommand("list", "print registered experiments and their default plans");

    // dump -------------------------------------------------------------------
    InstanceArgs dump_inst;
    int dump_levels = -1;
    auto* dump = app.add_subcommand("dump", "CSV of every vertex: path_bits,depth,Y,X");
    add_instance(dump, dump_inst);
    dump->add_option("--levels", dump_levels, "deepest level to write (default N)");

    // thresholds -------------------------------------------------------------
    InstanceArgs thr_inst;
    auto* thr_cmd = app.add_subcommand("thresholds", "concave hull and inverse-temperature thresholds");
    add_instance(thr_cmd, thr_inst, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*part) {
            const auto spec = crem::parse_covariance(part_inst.covariance, part_inst.depth);
            const double beta = part_beta.resolve(spec);
            const crem::CremInstance inst(part_inst.seed, part_inst.depth, spec);
            const int n = part_n < 0 ? part_inst.depth : part_n;
            json params{{"op", part_op}, {"seed", part_inst.seed}, {"depth", part_inst.depth}, {"beta", beta},
                        {"covariance", crem::to_json(spec)}};
            double value = 0.0;
            if (part_op == "exact") {
                value = crem::exact_log_Z(inst, n, beta);
                params["n"] = n;
            } else if (part_op == "annealed") {
                value = crem::annealed_log_Z(spec, part_inst.depth, n, beta);
                params["n"] = n;
            } else if (part_op == "normalized") {
                value = crem::normalized_log_Z(inst, n, beta);
                params["n"] = n;
            } else {
                const auto v = crem::VertexId::parse(part_vertex);
                value = crem::subtree_normalized_log_Z(inst, v, part_m, beta);
                params["vertex"] = part_vertex;
                params["m"] = part_m;
            }
            std::cout << json{{"log_value", value}, {"params", params}}.dump() << '\n';
            return 0;
        }

        if (*mcmc) {
            const auto spec = crem::parse_covariance(mc_inst.covariance, mc_inst.depth);
            mc_cfg.beta = mc_beta.resolve(spec);
            const crem::CremInstance inst(mc_inst.seed, mc_inst.depth, spec);
            const auto samples = crem::map_indices(mc_replicas, [&](std::size_t r) {
                auto rng = crem::make_stream(mc_path_seed, r);
                return crem::sample_mcmc(inst, mc_cfg, rng);
            });
            for (const auto& s : samples) {
                json line{{"leaf_bits", s.leaf ? json(bits_or_null(s.leaf)) : json(nullptr)},
                          {"steps_used", s.steps_used},
                          {"accepted_frac", s.accepted_frac()},
                          {"attempts", s.attempts}};
                std::cout << line.dump() << '\n';
            }
            return 0;
        }

        if (*seq) {
            const auto spec = crem::parse_covariance(seq_inst.covariance, seq_inst.depth);
            const double beta = seq_beta.resolve(spec);
            const crem::CremInstance inst(seq_inst.seed, seq_inst.depth, spec);
            const int m = seq_m ? *seq_m
                                : crem::lookahead_depth(spec, beta, seq_inst.depth, seq_eps, seq_delta, {seq_c});
            const crem::SequentialConfig cfg{m, beta, seq_path_seed};
            const auto samples = crem::map_indices(seq_replicas, [&](std::size_t r) {
                auto rng = crem::make_stream(seq_path_seed, r);
                return crem::sample_sequential(inst, cfg, rng);
            });
            for (const auto& s : samples)
                std::cout << json{{"leaf_bits", s.leaf.to_string()}, {"log_weight_trace", s.log_weight_trace}}.dump()
                          << '\n';
            return 0;
        }

        if (*spectrum) {
            const auto spec = crem::parse_covariance(spec_inst.covariance, spec_inst.depth);
            const double beta = spec_beta.resolve(spec);
            const auto gaps = crem::map_indices(spec_seeds, [&](std::size_t i) {
                const crem::CremInstance inst(spec_inst.seed + i, spec_inst.depth, spec);
                return crem::spectral_gap(crem::transition_matrix(inst, spec_m0, beta, spec_boost));
            });
            std::cout << "seed,N,gap\n";
            std::cout.precision(17);
            for (std::size_t i = 0; i < gaps.size(); ++i)
                std::cout << spec_inst.seed + i << ',' << spec_inst.depth << ',' << gaps[i] << '\n';
            return 0;
        }

        if (*gibbs) {
            const auto spec = crem::parse_covariance(gibbs_inst.covariance, gibbs_inst.depth);
            const double beta = gibbs_beta.resolve(spec);
            const crem::CremInstance inst(gibbs_inst.seed, gibbs_inst.depth, spec);
            const auto dist = crem::exact_gibbs(inst, gibbs_n < 0 ? gibbs_inst.depth : gibbs_n, beta);
            if (gibbs_format == "csv")
                crem::write_distribution_csv(std::cout, dist);
            else
                std::cout << json{{"n", dist.depth}, {"beta", beta}, {"probs", dist.probs}}.dump() << '\n';
            return 0;
        }

        if (*tvcmd) {
            double value = 0.0;
            json params;
            if (tv_m) {
                const auto spec = crem::parse_covariance(tv_inst.covariance, tv_inst.depth);
                const double beta = tv_beta.resolve(spec);
                const crem::CremInstance inst(tv_inst.seed, tv_inst.depth, spec);
                value = crem::tv(crem::sampler_law(inst, {*tv_m, beta, 0}), crem::exact_gibbs(inst, tv_inst.depth, beta));
                params = {{"seed", tv_inst.seed}, {"depth", tv_inst.depth}, {"beta", beta}, {"lookahead", *tv_m}};
            } else {
                if (tv_p.empty() || tv_q.empty()) throw std::invalid_argument("oracle tv needs --p and --q, or --lookahead");
                std::ifstream p(tv_p), q(tv_q);
                if (!p || !q) throw std::invalid_argument("cannot open distribution files");
                value = crem::tv(crem::read_distribution_csv(p), crem::read_distribution_csv(q));
                params = {{"p", tv_p}, {"q", tv_q}};
            }
            std::cout << json{{"tv", value}, {"params", params}}.dump() << '\n';
            return 0;
        }

        if (*tilt) {
            const auto spec = crem::parse_covariance(tilt_inst.covariance, tilt_n + tilt_extra);
            const double beta = tilt_beta.resolve(spec);
            crem::TiltOptions opts;
            opts.base_seed = tilt_inst.seed;
            const auto r = crem::tilt_density_check(spec, beta, tilt_n, tilt_extra, tilt_seeds, opts);
            json bins = json::array();
            for (const auto& b : r.bins)
                bins.push_back({{"z", b.z},
                                {"f", b.f},
                                {"f_se", b.f_se},
                                {"direct", b.direct},
                                {"via_density", b.via_density},
                                {"diff_se", b.diff_se},
                                {"agree", b.agree}});
            std::cout << json{{"n", r.n},
                              {"extra_depth", r.extra_depth},
                              {"beta", r.beta},
                              {"seeds", r.seeds},
                              {"density_mass", r.density_mass},
                              {"density_mass_se", r.density_mass_se},
                              {"all_bins_agree", r.all_bins_agree},
                              {"monotone", r.monotone},
                              {"passed", r.passed()},
                              {"bins", bins}}
                             .dump()
                      << '\n';
            return r.passed() ? 0 : 1;
        }

        if (*exp_run) {
            auto plan = crem::default_plan(exp_name);
            if (!exp_config.empty()) {
                std::ifstream in(exp_config);
                if (!in) throw std::invalid_argument("cannot open config '" + exp_config + "'");
                plan = crem::apply_config(plan, json::parse(in));
                plan.name = exp_name;
            }
            if (!exp_out.empty()) plan.out_dir = exp_out;
            const auto report = crem::run(plan);
            for (const auto& c : report.checks)
                std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.value << ' ' << c.relation << ' '
                          << c.threshold << ")\n";
            std::cout << report.summary().dump(2) << '\n';
            return report.passed() ? 0 : 1;
        }

        if (*exp_list) {
            json out = json::object();
            for (const auto& name : crem::experiment_names()) out[name] = crem::to_json(crem::default_plan(name));
            std::cout << out.dump(2) << '\n';
            return 0;
        }

        if (*dump) {
            const auto spec = crem::parse_covariance(dump_inst.covariance, dump_inst.depth);
            const crem::CremInstance inst(dump_inst.seed, dump_inst.depth, spec);
            crem::write_disorder_csv(std::cout, inst, dump_levels < 0 ? dump_inst.depth : dump_levels);
            return 0;
        }

        if (*thr_cmd) {
            const auto spec = crem::parse_covariance(thr_inst.covariance, thr_inst.depth);
            const auto t = crem::thresholds(spec);
            std::cout << json{{"covariance", crem::to_json(spec)},
                              {"concave_hull", crem::to_json(crem::concave_hull(spec))},
                              {"a_max", t.a_max},
                              {"a_hat_max", t.a_hat_max},
                              {"beta_c", t.beta_c},
                              {"beta_g", std::isfinite(t.beta_g) ? json(t.beta_g) : json("inf")},
                              {"beta_min", t.beta_min}}
                             .dump(2)
                      << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
