#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/envs.hpp"
#include "parl/mdp_io.hpp"
#include "parl/oracles.hpp"
#include "parl/suites.hpp"
#include "parl/training.hpp"

namespace parl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags, bad config documents or missing referenced files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json load_json(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("file not found: " + path.string());
    try {
        return read_json_file(path.string());
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Environments

using AnyEnv = std::variant<GridWorld, TabularEnv>;

/// env document: {"name": ..., plus name-specific keys}. Relative paths resolve
/// against `base_dir`.
inline AnyEnv make_env(const json& j, const fs::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("\"env\" must be an object");
    const auto name = j.value("name", std::string());
    const auto steps = j.value("max_episode_steps", std::size_t{0});
    const json grid = j.contains("grid") ? j.at("grid") : json(nullptr);
    if (name == "slippery_grid") return slippery_grid(grid);
    if (name == "switch_grid") return switch_obstacle_grid(grid);
    if (name == "two_state_diagnostic") return TabularEnv(two_state_diagnostic(), steps);
    if (name == "noisy_two_state") return TabularEnv(noisy_two_state_diagnostic(j.value("noisy_reward", 0.0)), steps);
    if (name == "random_mdp")
        return TabularEnv(random_ergodic_mdp(j.value("n_states", std::size_t{4}), j.value("n_actions", std::size_t{2}),
                                             j.value("alpha", 1.0), j.value("seed", std::uint64_t{0})),
                          steps);
    if (name == "mdp_file") {
        if (!j.contains("path")) throw ConfigError("env \"mdp_file\" needs \"path\"");
        fs::path p = j.at("path").get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        return TabularEnv(mdp_from_json(load_json(p)), steps);
    }
    throw ConfigError("unknown env \"" + name +
                      "\" (expected slippery_grid, switch_grid, two_state_diagnostic, noisy_two_state, random_mdp "
                      "or mdp_file)");
}

inline const TabularMdp& exact_mdp_of(const AnyEnv& env) {
    return std::visit([](const auto& e) -> const TabularMdp& { return e.exact_mdp(); }, env);
}

// ---------------------------------------------------------------------------
// Experiment config

struct ExperimentConfig {
    json env;
    TrainerConfig trainer;
    std::vector<double> k_values;
    std::vector<std::uint64_t> seeds{0};
    std::size_t eval_episodes = 200;
    std::uint64_t eval_seed_offset = 1000;
    std::string out_dir;
    fs::path base_dir;
};

inline ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{"env", "trainer", "k_values", "seeds", "eval_episodes",
                                                "eval_seed_offset", "out_dir"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config field \"" + key + "\"");
    ExperimentConfig c;
    c.base_dir = base_dir;
    try {
        if (!j.contains("env")) throw ConfigError("config needs \"env\"");
        c.env = j.at("env");
        if (j.contains("trainer")) c.trainer = trainer_config_from_json(j.at("trainer"));
        c.trainer.validate();
        if (j.contains("k_values")) c.k_values = j.at("k_values").get<std::vector<double>>();
        if (c.k_values.empty()) c.k_values = {c.trainer.k};
        for (double k : c.k_values)
            if (!(k >= 0.0)) throw ConfigError("k_values must be nonnegative");
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
        auto sorted = c.seeds;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("seeds must be distinct");
        c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
        c.eval_seed_offset = j.value("eval_seed_offset", c.eval_seed_offset);
        c.out_dir = j.value("out_dir", std::string());
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    (void)make_env(c.env, base_dir);
    return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
    return experiment_from_json(load_json(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Output options shared by the subcommands

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
    bool bits = false;
};

inline fs::path resolve_out_dir(const Common& o, const std::string& config_out) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("PARL_OUT_DIR"); env && *env) return env;
    if (!config_out.empty()) return config_out;
    return ".";
}

inline std::size_t resolve_threads(const Common& o) {
    if (o.threads) return std::max<std::size_t>(1, *o.threads);
    if (const char* env = std::getenv("PARL_THREADS"); env && *env) {
        try {
            return std::max<std::size_t>(1, std::stoul(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("PARL_THREADS is not a number: ") + env);
        }
    }
    return 1;
}

/// Rescales every numeric value under an entropy-valued key from nats to bits.
inline json to_bits(json j) {
    static const std::vector<std::string> keys{"empirical_surrogate_rate", "exact_entropy_rate", "exact_surrogate_rate",
                                               "min_surrogate_rate",       "min_true_rate",      "entropy_rate",
                                               "surrogate_rate",           "rate_estimate"};
    auto scale = [](json& v, auto& self) -> void {
        if (v.is_number()) v = v.get<double>() / std::log(2.0);
        else if (v.is_object() || v.is_array())
            for (auto& e : v) self(e, self);
    };
    auto walk = [&](json& v, auto& self) -> void {
        if (v.is_object()) {
            for (auto& [k, e] : v.items()) {
                if (std::find(keys.begin(), keys.end(), k) != keys.end())
                    scale(e, scale);
                else
                    self(e, self);
            }
        } else if (v.is_array()) {
            for (auto& e : v) self(e, self);
        }
    };
    walk(j, walk);
    return j;
}

inline json finish_report(json j, bool bits) {
    j["units"] = bits ? "bits" : "nats";
    return bits ? to_bits(std::move(j)) : j;
}

inline std::string format_k(double k) {
    std::ostringstream o;
    o << k;
    return o.str();
}

// ---------------------------------------------------------------------------
// Summaries

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    for (double x : v) r.std += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(r.std / static_cast<double>(v.size()));
    return r;
}

/// Mean of each numeric metric over the final 10% of epochs (at least one).
inline json final_window(const std::vector<json>& metrics) {
    json out = json::object();
    if (metrics.empty()) return out;
    const std::size_t w = std::max<std::size_t>(1, (metrics.size() + 9) / 10);
    std::map<std::string, std::vector<double>> acc;
    for (std::size_t i = metrics.size() - w; i < metrics.size(); ++i)
        for (const auto& [k, v] : metrics[i].items())
            if (v.is_number() && k != "epoch" && k != "steps") acc[k].push_back(v.get<double>());
    for (const auto& [k, v] : acc) out[k] = mean_std(v).mean;
    out["window_epochs"] = w;
    return out;
}

inline json eval_to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"episodes", r.episodes.size()},
            {"mean_return", r.mean_return},
            {"std_return", r.std_return},
            {"mean_length", r.mean_length},
            {"std_length", r.std_length},
            {"success_rate", r.success_rate},
            {"failure_rate", r.failure_rate},
            {"switch_rate", r.switch_rate},
            {"empirical_surrogate_rate", opt(r.empirical_surrogate_rate)},
            {"exact_entropy_rate", opt(r.exact_entropy_rate)},
            {"exact_surrogate_rate", opt(r.exact_surrogate_rate)}};
}

/// mean/std across seeds of every numeric field present in all rows.
inline json aggregate(const std::vector<json>& rows) {
    json out = json::object();
    if (rows.empty()) return out;
    for (const auto& [k, v] : rows.front().items()) {
        if (!v.is_number()) continue;
        std::vector<double> xs;
        for (const auto& r : rows)
            if (r.contains(k) && r.at(k).is_number()) xs.push_back(r.at(k).get<double>());
        if (xs.size() != rows.size()) continue;
        const auto ms = mean_std(xs);
        out[k] = {{"mean", ms.mean}, {"std", ms.std}};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct RunOutput {
    double k = 0.0;
    std::uint64_t seed = 0;
    std::string metrics_jsonl;
    json policy;
    json window;
    json eval;
};

inline RunOutput run_one(const ExperimentConfig& cfg, double k, std::uint64_t seed) {
    auto env = make_env(cfg.env, cfg.base_dir);
    TrainerConfig tc = cfg.trainer;
    tc.k = k;
    tc.seed = seed;
    RunOutput out;
    out.k = k;
    out.seed = seed;
    std::visit(
        [&](auto& e) {
            auto res = train(e, tc);
            std::string lines;
            for (const auto& m : res.metrics) lines += m.dump() + "\n";
            out.metrics_jsonl = std::move(lines);
            out.policy = res.policy.to_json();
            out.window = final_window(res.metrics);
            const auto pol = res.policy.to_stochastic();
            out.eval = eval_to_json(evaluate(e, pol, cfg.eval_episodes, seed + cfg.eval_seed_offset));
            if constexpr (std::is_same_v<std::decay_t<decltype(e)>, GridWorld>)
                out.eval["slippery_mass"] = slippery_mass(e, pol);
        },
        env);
    return out;
}

inline int cmd_train(const Common& o, std::ostream& log) {
    if (o.config.empty()) throw ConfigError("train needs --config");
    auto cfg = load_experiment(o.config);
    if (o.seed) cfg.seeds = {*o.seed};
    const fs::path dir = resolve_out_dir(o, cfg.out_dir);
    const std::size_t threads = resolve_threads(o);

    struct Job {
        double k;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (double k : cfg.k_values) {
        auto seeds = cfg.seeds;
        std::sort(seeds.begin(), seeds.end());
        for (auto s : seeds) jobs.push_back({k, s});
    }
    std::vector<RunOutput> results(jobs.size());
    detail::parallel_batches(jobs.size(), threads, [&](std::size_t i) { results[i] = run_one(cfg, jobs[i].k, jobs[i].seed); });

    json rows = json::array();
    std::size_t i = 0;
    for (double k : cfg.k_values) {
        std::vector<json> windows, evals;
        json per_seed = json::array();
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++i) {
            const auto& r = results[i];
            const std::string tag = "k" + format_k(r.k) + "_seed" + std::to_string(r.seed);
            write_text(dir / ("metrics_" + tag + ".jsonl"), r.metrics_jsonl);
            write_json(dir / ("policy_" + tag + ".json"), r.policy);
            windows.push_back(r.window);
            evals.push_back(r.eval);
            per_seed.push_back({{"seed", r.seed}, {"final_window", r.window}, {"eval", r.eval}});
        }
        rows.push_back({{"k", k},
                        {"n_seeds", cfg.seeds.size()},
                        {"final_window", aggregate(windows)},
                        {"eval", aggregate(evals)},
                        {"runs", per_seed}});
        const auto& ev = rows.back()["eval"];
        log << "k=" << format_k(k) << " return " << ev["mean_return"]["mean"].get<double>() << " success "
            << ev["success_rate"]["mean"].get<double>() << "\n";
    }
    json summary = {{"config", {{"env", cfg.env}, {"trainer", trainer_config_to_json(cfg.trainer)}}},
                    {"epochs", cfg.trainer.epochs},
                    {"rows", rows}};
    write_json(dir / "summary.json", finish_report(summary, o.bits));
    return kExitOk;
}

inline int cmd_verify(const Common& o, const std::string& suite, std::optional<std::size_t> trials, std::ostream& log) {
    std::vector<std::string> names;
    if (suite == "all")
        names = suite_names();
    else if (std::find(suite_names().begin(), suite_names().end(), suite) != suite_names().end())
        names = {suite};
    else
        throw ConfigError("unknown suite \"" + suite + "\"");
    const std::uint64_t seed = o.seed.value_or(0);
    json reports = json::array();
    bool ok = true;
    for (const auto& name : names) {
        const auto rep = run_suite(name, trials.value_or(default_trials(name)), seed);
        ok = ok && rep.pass();
        for (const auto& w : rep.warnings) log << "warning: " << name << ": " << w << "\n";
        for (const auto& p : rep.properties)
            log << name << "." << p.name << (p.pass() ? " pass" : " FAIL") << " worst_slack "
                << (std::isfinite(p.worst_slack) ? p.worst_slack : 0.0) << "\n";
        reports.push_back(suite_report_to_json(rep));
    }
    const fs::path dir = resolve_out_dir(o, "");
    write_json(dir / ("verify_" + suite + ".json"), {{"suite", suite}, {"seed", seed}, {"pass", ok}, {"reports", reports}});
    return ok ? kExitOk : kExitFailure;
}

inline int cmd_solve(const Common& o, const std::string& mdp_path, const std::string& objective, double k,
                     std::ostream& log) {
    TabularMdp mdp;
    if (!mdp_path.empty()) {
        try {
            mdp = mdp_from_json(load_json(mdp_path));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else if (!o.config.empty()) {
        const auto j = load_json(o.config);
        if (!j.contains("env")) throw ConfigError("config needs \"env\"");
        mdp = exact_mdp_of(make_env(j.at("env"), fs::path(o.config).parent_path()));
    } else {
        throw ConfigError("solve needs --mdp or --config");
    }
    if (!(k >= 0.0)) throw ConfigError("--k must be nonnegative");
    json out;
    if (objective == "entropy") {
        OracleOptions opts;
        opts.threads = resolve_threads(o);
        out = certificate_to_json(min_entropy_deterministic(mdp, opts));
        out["objective"] = "entropy";
    } else if (objective == "reward" || objective == "combined") {
        const double kk = objective == "reward" ? 0.0 : k;
        const auto s = surrogate_table(mdp);
        std::vector<double> r(mdp.n_states() * mdp.n_actions());
        for (std::size_t x = 0; x < mdp.n_states(); ++x)
            for (std::size_t u = 0; u < mdp.n_actions(); ++u)
                r[x * mdp.n_actions() + u] = mdp.expected_reward(x, u) - kk * s[x * mdp.n_actions() + u];
        const auto sol = avg_reward_optimal(mdp, r, Sense::maximize);
        const auto er = entropy_report(mdp, sol.policy.to_stochastic());
        std::vector<double> rr(mdp.n_states());
        for (std::size_t x = 0; x < mdp.n_states(); ++x) rr[x] = mdp.expected_reward(x, sol.policy[x]);
        out = {{"objective", objective},
               {"k", kk},
               {"policy", sol.policy.actions()},
               {"objective_gain", sol.gain},
               {"reward_gain", gain_and_bias(compose(mdp, sol.policy), rr).gain},
               {"entropy_rate", er.rate},
               {"surrogate_rate", er.surrogate_rate},
               {"sweeps", sol.sweeps}};
    } else {
        throw ConfigError("--objective must be entropy, reward or combined");
    }
    out = finish_report(out, o.bits);
    write_json(resolve_out_dir(o, "") / ("solve_" + objective + ".json"), out);
    log << out.dump() << "\n";
    return kExitOk;
}

inline StochasticPolicy load_policy(const fs::path& path) {
    const auto j = load_json(path);
    try {
        if (j.value("kind", std::string()) == "softmax") return SoftmaxPolicy::from_json(j).to_stochastic();
        return policy_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline int cmd_eval(const Common& o, const std::string& policy_path, std::size_t episodes, std::ostream& log) {
    if (o.config.empty()) throw ConfigError("eval needs --config for the environment");
    if (policy_path.empty()) throw ConfigError("eval needs --policy");
    const auto j = load_json(o.config);
    if (!j.contains("env")) throw ConfigError("config needs \"env\"");
    auto env = make_env(j.at("env"), fs::path(o.config).parent_path());
    const auto pol = load_policy(policy_path);
    json out;
    std::visit(
        [&](auto& e) {
            if (pol.n_states() != e.n_states() || pol.n_actions() != e.n_actions())
                throw ConfigError(detail::concat("policy is ", pol.n_states(), "x", pol.n_actions(),
                                                 " but environment is ", e.n_states(), "x", e.n_actions()));
            out = eval_to_json(evaluate(e, pol, episodes, o.seed.value_or(0)));
        },
        env);
    out = finish_report(out, o.bits);
    write_json(resolve_out_dir(o, "") / "eval.json", out);
    log << out.dump() << "\n";
    return kExitOk;
}

inline int cmd_export(const Common& o, std::ostream& log) {
    if (o.config.empty()) throw ConfigError("export needs --config");
    const auto j = load_json(o.config);
    if (!j.contains("env")) throw ConfigError("config needs \"env\"");
    const auto env = make_env(j.at("env"), fs::path(o.config).parent_path());
    const auto& mdp = exact_mdp_of(env);
    const auto path = resolve_out_dir(o, "") / "mdp.json";
    write_json(path, mdp_to_json(mdp));
    log << "wrote " << path.string() << " (" << mdp.n_states() << " states, " << mdp.n_actions() << " actions)\n";
    return kExitOk;
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Entropy-rate regularised policy optimisation on tabular MDPs", "parl"};
    app.require_subcommand(1);
    Common o;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
        if (needs_config) c->required();
        sub->add_option("--seed", seed, "seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--bits", o.bits, "report entropies in bits");
    };

    auto* train_cmd = app.add_subcommand("train", "train policies for every k and seed in the config");
    common(train_cmd, true);

    std::string suite = "all";
    std::size_t trials = 0;
    auto* verify_cmd = app.add_subcommand("verify", "run property suites");
    common(verify_cmd, false);
    verify_cmd->add_option("--suite", suite, "lemma1|theorem|fannes|critic|all");
    auto* trials_opt = verify_cmd->add_option("--trials", trials, "trials per suite");

    std::string mdp_path, objective = "entropy";
    double k = 1.0;
    auto* solve_cmd = app.add_subcommand("solve", "exact solution of a small MDP");
    common(solve_cmd, false);
    solve_cmd->add_option("--mdp", mdp_path, "MDP document (JSON)");
    solve_cmd->add_option("--objective", objective, "entropy|reward|combined");
    solve_cmd->add_option("--k", k, "entropy weight for the combined objective");

    std::string policy_path;
    std::size_t episodes = 100;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved policy");
    common(eval_cmd, true);
    eval_cmd->add_option("--policy", policy_path, "policy file")->required();
    eval_cmd->add_option("--episodes", episodes, "episodes");

    auto* export_cmd = app.add_subcommand("export", "write the exact MDP of the configured environment");
    common(export_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) o.seed = seed;
        if (sub->count("--threads")) o.threads = threads;
    }

    try {
        if (*train_cmd) return cmd_train(o, out);
        if (*verify_cmd)
            return cmd_verify(o, suite, trials_opt->count() ? std::optional<std::size_t>(trials) : std::nullopt, out);
        if (*solve_cmd) return cmd_solve(o, mdp_path, objective, k, out);
        if (*eval_cmd) return cmd_eval(o, policy_path, episodes, out);
        if (*export_cmd) return cmd_export(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"parl"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace parl::cli
