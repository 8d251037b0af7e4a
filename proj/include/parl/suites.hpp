#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/envs.hpp"
#include "parl/model.hpp"
#include "parl/oracles.hpp"
#include "parl/training.hpp"

// Executable property suites. Slack is (bound - observed); a property holds
// when its worst slack is nonnegative.

namespace parl {

struct PropertyResult {
    std::string name;
    double worst_slack = std::numeric_limits<double>::infinity();
    std::size_t checks = 0;

    void record(double slack) {
        worst_slack = std::min(worst_slack, slack);
        ++checks;
    }
    bool pass() const { return worst_slack >= 0.0; }
};

struct SuiteReport {
    std::string suite;
    std::uint64_t seed = 0;
    std::size_t n_trials = 0;
    std::vector<PropertyResult> properties;
    std::vector<std::string> warnings;
    nlohmann::json extra = nlohmann::json::object();

    bool pass() const {
        return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.pass(); });
    }

    PropertyResult& property(const std::string& name) {
        for (auto& p : properties)
            if (p.name == name) return p;
        properties.push_back({name});
        return properties.back();
    }
};

inline nlohmann::json suite_report_to_json(const SuiteReport& r) {
    nlohmann::json props = nlohmann::json::array();
    for (const auto& p : r.properties)
        props.push_back({{"name", p.name},
                         {"pass", p.pass()},
                         {"checks", p.checks},
                         {"worst_slack", std::isfinite(p.worst_slack) ? nlohmann::json(p.worst_slack) : nlohmann::json(nullptr)}});
    return {{"suite", r.suite},     {"seed", r.seed},         {"n_trials", r.n_trials}, {"pass", r.pass()},
            {"properties", props}, {"warnings", r.warnings}, {"details", r.extra}};
}

namespace detail {

inline SuiteReport start_suite(const std::string& name, std::size_t n_trials, std::uint64_t seed,
                               std::initializer_list<const char*> props) {
    SuiteReport r;
    r.suite = name;
    r.seed = seed;
    r.n_trials = n_trials;
    for (const char* p : props) r.properties.push_back({p});
    if (n_trials == 0) r.warnings.push_back("zero trials: properties hold vacuously");
    return r;
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
    return seed * 1'000'003ULL + static_cast<std::uint64_t>(trial) * 7919ULL + 1;
}

}  // namespace detail

struct Lemma1Options {
    std::size_t max_states = 6;
    std::size_t max_actions = 3;
    double tolerance = 1e-10;
};

/// Per-state E_pi[s] <= l, h_s <= h for a random stochastic policy, and h_s = h
/// for every deterministic policy, on random ergodic MDPs.
inline SuiteReport lemma1_suite(std::size_t n_trials, std::uint64_t seed, const Lemma1Options& opt = {}) {
    auto rep = detail::start_suite("lemma1", n_trials, seed,
                                   {"expected_surrogate_below_local", "surrogate_rate_below_rate",
                                    "deterministic_rates_equal"});
    auto rng = make_rng(seed);
    for (std::size_t t = 0; t < n_trials; ++t) {
        const std::size_t n = 2 + uniform_index(opt.max_states - 1, rng);
        const std::size_t m = 1 + uniform_index(opt.max_actions, rng);
        const double alpha = 0.2 + 1.8 * uniform01(rng);
        const auto mdp = random_ergodic_mdp(n, m, alpha, rng());
        const auto pi = sample_dirichlet_policy(n, m, rng);
        const auto s = surrogate_table(mdp);
        const auto er = entropy_report(mdp, pi);
        for (std::size_t x = 0; x < n; ++x) {
            double es = 0.0;
            for (std::size_t u = 0; u < m; ++u) es += pi(x, u) * s[x * m + u];
            rep.property("expected_surrogate_below_local").record(er.local[x] + opt.tolerance - es);
        }
        rep.property("surrogate_rate_below_rate").record(er.rate + opt.tolerance - er.surrogate_rate);
        enumerate_deterministic_policies(mdp).for_each([&](const DeterministicPolicy& d) {
            const auto dr = entropy_report(mdp, d.to_stochastic());
            rep.property("deterministic_rates_equal").record(opt.tolerance - std::abs(dr.surrogate_rate - dr.rate));
        });
    }
    return rep;
}

struct TheoremOptions {
    std::size_t n_states = 4;
    std::size_t n_actions = 3;
    std::size_t stochastic_samples = 200;
    double tolerance = 1e-10;
};

/// The h_s-minimising deterministic policy also minimises h over deterministic
/// and sampled stochastic policies.
inline SuiteReport theorem_suite(std::size_t n_trials, std::uint64_t seed, const TheoremOptions& opt = {}) {
    auto rep = detail::start_suite("theorem", n_trials, seed,
                                   {"argmin_rates_equal", "deterministic_not_beaten", "stochastic_not_beaten"});
    std::size_t local_minima = 0, local_violations = 0;
    for (std::size_t t = 0; t < n_trials; ++t) {
        const auto mdp = random_ergodic_mdp(opt.n_states, opt.n_actions, 1.0, detail::trial_seed(seed, t));
        const auto r = verify_equivalence_theorem(mdp, opt.stochastic_samples, detail::trial_seed(seed, t) + 17);
        rep.property("argmin_rates_equal").record(opt.tolerance - r.argmin_gap);
        rep.property("deterministic_not_beaten").record(r.deterministic_slack + opt.tolerance);
        rep.property("stochastic_not_beaten").record(r.stochastic_slack + opt.tolerance);
        local_minima += r.n_local_minima;
        local_violations += r.local_violations;
    }
    rep.extra["local_minima"] = local_minima;
    rep.extra["local_minima_not_transferred"] = local_violations;
    return rep;
}

struct FannesOptions {
    std::vector<double> epsilons{0.01, 0.05, 0.1};
    std::size_t n_states = 5;
    std::size_t n_actions = 2;
    std::size_t rollout_steps = 100'000;
};

/// Fits a count model with growing per-pair sample counts until its worst-row TV
/// error is at most `target`. Returns the model; the measured error is recomputed
/// by the caller.
inline CountModel fit_count_model_to_tv(const TabularMdp& mdp, double target, Rng& rng,
                                        std::uint64_t max_samples_per_pair = 50'000'000) {
    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    CountModel model(n, m, 0.0);
    std::uint64_t per_pair = 16;
    std::uint64_t drawn = 0;
    std::vector<double> row(n);
    for (;;) {
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t u = 0; u < m; ++u) {
                std::fill(row.begin(), row.end(), 0.0);
                for (const auto& t : mdp.row(x, u)) row[t.next] = t.prob;
                for (std::uint64_t i = drawn; i < per_pair; ++i) model.update(x, u, sample_categorical(row, rng));
            }
        drawn = per_pair;
        if (model_tv_error(model, mdp) <= target) return model;
        if (per_pair >= max_samples_per_pair)
            throw std::runtime_error(detail::concat("count model did not reach TV ", target, " within ", per_pair,
                                                    " samples per pair"));
        per_pair = per_pair + per_pair / 2;
    }
}

/// |s_phi - s| <= K(eps) per pair and for the empirical surrogate rate along a
/// rollout, with eps the measured worst-row TV error of the count model.
inline SuiteReport fannes_suite(std::size_t n_trials, std::uint64_t seed, const FannesOptions& opt = {}) {
    auto rep = detail::start_suite("fannes", n_trials, seed, {"pairwise_gap_within_bound", "rollout_rate_gap_within_bound"});
    auto rng = make_rng(seed);
    nlohmann::json measured = nlohmann::json::array();
    for (std::size_t t = 0; t < n_trials; ++t) {
        const auto mdp = random_ergodic_mdp(opt.n_states, opt.n_actions, 1.0, rng());
        const auto s = surrogate_table(mdp);
        const std::size_t m = mdp.n_actions();
        for (double target : opt.epsilons) {
            const auto model = fit_count_model_to_tv(mdp, target, rng);
            const double eps = model_tv_error(model, mdp);
            const double bound = fannes_bound(eps, mdp.n_states());
            if (t == 0) measured.push_back({{"target", target}, {"measured", eps}, {"bound", bound}});
            for (std::size_t x = 0; x < mdp.n_states(); ++x)
                for (std::size_t u = 0; u < m; ++u)
                    rep.property("pairwise_gap_within_bound").record(bound - std::abs(model.surrogate(x, u) - s[x * m + u]));

            TabularEnv env(mdp);
            const SoftmaxPolicy uniform(mdp.n_states(), m);
            const auto buf = rollout(env, uniform, opt.rollout_steps, rng());
            std::vector<std::pair<std::size_t, std::size_t>> traj;
            traj.reserve(buf.size());
            for (const auto& st : buf.steps) traj.emplace_back(st.x, st.u);
            const double est = empirical_surrogate_rate(traj, [&](std::size_t x, std::size_t u) { return model.surrogate(x, u); });
            const double truth = empirical_surrogate_rate(traj, [&](std::size_t x, std::size_t u) { return s[x * m + u]; });
            rep.property("rollout_rate_gap_within_bound").record(bound - std::abs(est - truth));
        }
    }
    rep.extra["first_trial_epsilons"] = measured;
    return rep;
}

struct CriticOptions {
    std::size_t n_states = 5;
    std::size_t n_actions = 2;
    std::size_t steps = 100'000;
    double tolerance = 0.05;
};

/// Tabular TD(0) entropy critic with exact s and exact rate under a fixed random
/// policy; compares to the bias of the chain with state reward E_pi[s], up to a
/// constant.
struct CriticTrial {
    double sup_error = 0.0;
    std::vector<double> critic;
    std::vector<double> bias;
};

inline double beta_schedule(std::size_t t) { return std::max(0.002, 0.5 / (1.0 + static_cast<double>(t) / 200.0)); }

inline CriticTrial run_critic_trial(const TabularMdp& mdp, const StochasticPolicy& pi, std::size_t steps,
                                    std::uint64_t seed) {
    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    const auto s = surrogate_table(mdp);
    std::vector<double> r(n, 0.0);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t u = 0; u < m; ++u) r[x] += pi(x, u) * s[x * m + u];
    const auto gb = gain_and_bias(compose(mdp, pi), r);

    TabularEnv env(mdp);
    auto rng = make_rng(seed);
    env.reset(rng);
    LinearCritic w(n);
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t x = env.state();
        const std::size_t u = sample_categorical(pi.row(x), rng);
        const auto step = env.step(u, rng);
        w.td_step(x, s[x * m + u] - gb.gain + w.value(step.next_state), beta_schedule(t));
    }
    CriticTrial out;
    out.bias = gb.bias;
    out.critic.resize(n);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t x = 0; x < n; ++x) {
        out.critic[x] = w.value(x);
        lo = std::min(lo, out.critic[x] - gb.bias[x]);
        hi = std::max(hi, out.critic[x] - gb.bias[x]);
    }
    out.sup_error = 0.5 * (hi - lo);
    return out;
}

inline SuiteReport critic_suite(std::size_t n_trials, std::uint64_t seed, const CriticOptions& opt = {}) {
    auto rep = detail::start_suite("critic", n_trials, seed, {"critic_matches_bias"});
    auto rng = make_rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) {
        const auto mdp = random_ergodic_mdp(opt.n_states, opt.n_actions, 1.0, rng());
        const auto pi = sample_dirichlet_policy(opt.n_states, opt.n_actions, rng);
        const auto trial = run_critic_trial(mdp, pi, opt.steps, rng());
        worst = std::max(worst, trial.sup_error);
        rep.property("critic_matches_bias").record(opt.tolerance - trial.sup_error);
    }
    rep.extra["worst_sup_error"] = worst;
    rep.extra["steps"] = opt.steps;
    return rep;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"lemma1", "theorem", "fannes", "critic"};
    return names;
}

inline std::size_t default_trials(const std::string& suite) {
    if (suite == "lemma1") return 1000;
    if (suite == "theorem" || suite == "fannes") return 50;
    if (suite == "critic") return 10;
    throw std::invalid_argument("unknown suite \"" + suite + "\"");
}

inline SuiteReport run_suite(const std::string& suite, std::size_t n_trials, std::uint64_t seed) {
    if (suite == "lemma1") return lemma1_suite(n_trials, seed);
    if (suite == "theorem") return theorem_suite(n_trials, seed);
    if (suite == "fannes") return fannes_suite(n_trials, seed);
    if (suite == "critic") return critic_suite(n_trials, seed);
    throw std::invalid_argument("unknown suite \"" + suite + "\"");
}

}  // namespace parl
