#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/mdp.hpp"
#include "parl/rng.hpp"

namespace parl {

inline constexpr std::uint64_t kDefaultEnumerationBudget = 1'000'000;

class EnumerationBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// All n_actions^n_states deterministic policies in lexicographic order of the
/// action vector (last state varies fastest).
class PolicyEnumeration {
public:
    PolicyEnumeration(std::size_t n_states, std::size_t n_actions, std::uint64_t budget = kDefaultEnumerationBudget)
        : n_states_(n_states), n_actions_(n_actions) {
        if (n_states == 0 || n_actions == 0) throw std::invalid_argument("empty state or action set");
        count_ = 1;
        for (std::size_t x = 0; x < n_states; ++x) {
            if (count_ > budget / n_actions)
                throw EnumerationBudgetError(detail::concat(n_actions, "^", n_states,
                                                            " deterministic policies exceed budget ", budget));
            count_ *= n_actions;
        }
        if (count_ > budget)
            throw EnumerationBudgetError(detail::concat(count_, " deterministic policies exceed budget ", budget));
    }

    std::uint64_t size() const { return count_; }

    DeterministicPolicy at(std::uint64_t index) const {
        if (index >= count_) throw std::out_of_range("policy index out of range");
        std::vector<std::size_t> a(n_states_);
        for (std::size_t pos = n_states_; pos-- > 0;) {
            a[pos] = static_cast<std::size_t>(index % n_actions_);
            index /= n_actions_;
        }
        return {std::move(a), n_actions_};
    }

    template <class F>
    void for_each(F&& f) const {
        std::vector<std::size_t> a(n_states_, 0);
        for (std::uint64_t k = 0; k < count_; ++k) {
            f(DeterministicPolicy(a, n_actions_));
            for (std::size_t pos = n_states_; pos-- > 0;) {
                if (++a[pos] < n_actions_) break;
                a[pos] = 0;
            }
        }
    }

    std::vector<DeterministicPolicy> all() const {
        std::vector<DeterministicPolicy> out;
        out.reserve(static_cast<std::size_t>(count_));
        for_each([&](const DeterministicPolicy& p) { out.push_back(p); });
        return out;
    }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::uint64_t count_ = 0;
};

inline PolicyEnumeration enumerate_deterministic_policies(const TabularMdp& mdp,
                                                          std::uint64_t budget = kDefaultEnumerationBudget) {
    return {mdp.n_states(), mdp.n_actions(), budget};
}

namespace detail {

/// Runs fn(b) for b in [0, n_batches) on up to `threads` workers.
template <class F>
void parallel_batches(std::size_t n_batches, std::size_t threads, F&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n_batches));
    if (threads == 1) {
        for (std::size_t b = 0; b < n_batches; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t b = next++; b < n_batches; b = next++) fn(b);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Surrogate rate of a deterministic policy from a precomputed s table.
inline double deterministic_surrogate_rate(const TabularMdp& mdp, const std::vector<double>& s_table,
                                           const DeterministicPolicy& pi) {
    const auto mu = stationary_distribution(compose(mdp, pi));
    double h = 0.0;
    for (std::size_t x = 0; x < mdp.n_states(); ++x) h += mu[x] * s_table[x * mdp.n_actions() + pi[x]];
    return h;
}

}  // namespace detail

inline constexpr double kTieTolerance = 1e-12;

struct OptimalityCertificate {
    DeterministicPolicy argmin_policy;
    double min_surrogate_rate = 0.0;
    double min_true_rate = 0.0;
    std::uint64_t n_policies_enumerated = 0;
};

inline nlohmann::json certificate_to_json(const OptimalityCertificate& c) {
    return {{"argmin_policy", c.argmin_policy.actions()},
            {"min_surrogate_rate", c.min_surrogate_rate},
            {"min_true_rate", c.min_true_rate},
            {"n_policies_enumerated", c.n_policies_enumerated}};
}

struct OracleOptions {
    std::uint64_t budget = kDefaultEnumerationBudget;
    std::size_t threads = 1;
    std::uint64_t batch_size = 4096;
};

/// Brute-force argmin of the surrogate rate over deterministic policies.
/// A candidate replaces the incumbent only if lower by more than 1e-12, so the
/// lexicographically first of a tie wins. Batches are fixed-size and merged in
/// order, which makes the result independent of the thread count.
inline OptimalityCertificate min_entropy_deterministic(const TabularMdp& mdp, const OracleOptions& opts = {}) {
    const auto en = enumerate_deterministic_policies(mdp, opts.budget);
    const auto s = surrogate_table(mdp);
    const std::uint64_t n = en.size();
    const std::uint64_t bs = std::max<std::uint64_t>(1, opts.batch_size);
    const std::size_t n_batches = static_cast<std::size_t>((n + bs - 1) / bs);
    struct Best {
        std::uint64_t index = 0;
        double value = std::numeric_limits<double>::infinity();
    };
    std::vector<Best> best(n_batches);
    detail::parallel_batches(n_batches, opts.threads, [&](std::size_t b) {
        const std::uint64_t lo = b * bs;
        const std::uint64_t hi = std::min(n, lo + bs);
        auto pi = en.at(lo);
        std::vector<std::size_t> a = pi.actions();
        for (std::uint64_t k = lo; k < hi; ++k) {
            const double h = detail::deterministic_surrogate_rate(mdp, s, DeterministicPolicy(a, mdp.n_actions()));
            if (h < best[b].value - kTieTolerance) best[b] = {k, h};
            for (std::size_t pos = a.size(); pos-- > 0;) {
                if (++a[pos] < mdp.n_actions()) break;
                a[pos] = 0;
            }
        }
    });
    Best overall = best.front();
    for (std::size_t b = 1; b < n_batches; ++b)
        if (best[b].value < overall.value - kTieTolerance) overall = best[b];
    OptimalityCertificate cert;
    cert.argmin_policy = en.at(overall.index);
    cert.min_surrogate_rate = overall.value;
    cert.min_true_rate = entropy_rate_exact(mdp, cert.argmin_policy);
    cert.n_policies_enumerated = n;
    return cert;
}

enum class Sense { minimize, maximize };

struct AverageRewardSolution {
    DeterministicPolicy policy;
    double gain = 0.0;
    double rvi_gain = 0.0;
    std::size_t sweeps = 0;
    std::vector<double> relative_values;
};

/// Relative value iteration on the lazy MDP (P + I)/2, which has the same
/// stationary distributions and gains but no periodic policies. Stops when the
/// span of successive differences is below `span_tol`; the reported gain is
/// recomputed exactly for the greedy policy.
inline AverageRewardSolution avg_reward_optimal(const TabularMdp& mdp, const std::vector<double>& state_action_reward,
                                                Sense sense, double span_tol = 1e-9,
                                                std::size_t max_sweeps = 10'000'000) {
    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    if (state_action_reward.size() != n * m)
        throw std::invalid_argument(detail::concat("reward table has ", state_action_reward.size(),
                                                   " entries, expected ", n * m));
    const double sign = sense == Sense::maximize ? 1.0 : -1.0;
    std::vector<double> h(n, 0.0), th(n);
    auto q = [&](std::size_t x, std::size_t u, const std::vector<double>& v) {
        double e = 0.0;
        for (const auto& t : mdp.row(x, u)) e += t.prob * v[t.next];
        return sign * state_action_reward[x * m + u] + 0.5 * e + 0.5 * v[x];
    };
    AverageRewardSolution sol;
    double lo = 0.0, hi = 0.0;
    for (;;) {
        if (sol.sweeps >= max_sweeps)
            throw std::runtime_error(detail::concat("relative value iteration did not converge in ", max_sweeps, " sweeps"));
        ++sol.sweeps;
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (std::size_t x = 0; x < n; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t u = 0; u < m; ++u) best = std::max(best, q(x, u, h));
            th[x] = best;
            lo = std::min(lo, th[x] - h[x]);
            hi = std::max(hi, th[x] - h[x]);
        }
        const double ref = th[0];
        for (std::size_t x = 0; x < n; ++x) h[x] = th[x] - ref;
        if (hi - lo < span_tol) break;
    }
    sol.rvi_gain = sign * 0.5 * (lo + hi);
    std::vector<std::size_t> actions(n, 0);
    for (std::size_t x = 0; x < n; ++x) {
        double best = q(x, 0, h);
        for (std::size_t u = 1; u < m; ++u) {
            const double v = q(x, u, h);
            if (v > best + kTieTolerance) {
                best = v;
                actions[x] = u;
            }
        }
    }
    sol.policy = DeterministicPolicy(std::move(actions), m);
    const auto mc = compose(mdp, sol.policy);
    std::vector<double> r(n);
    for (std::size_t x = 0; x < n; ++x) r[x] = state_action_reward[x * m + sol.policy[x]];
    sol.gain = gain_and_bias(mc, r).gain;
    sol.relative_values = std::move(h);
    return sol;
}

struct EquivalenceReport {
    OptimalityCertificate certificate;
    /// (a) |h_s - h| at the deterministic argmin.
    double argmin_gap = 0.0;
    /// (b) min over deterministic policies of h minus the certificate's h.
    double deterministic_slack = 0.0;
    /// (c) min over sampled stochastic policies of h minus the certificate's h.
    double stochastic_slack = std::numeric_limits<double>::infinity();
    std::size_t n_stochastic_samples = 0;
    /// Single-state-swap local minima of h_s that are not local minima of h.
    std::size_t local_violations = 0;
    std::size_t n_local_minima = 0;
    double tolerance = 1e-10;

    bool argmin_ok() const { return argmin_gap <= tolerance; }
    bool deterministic_ok() const { return deterministic_slack >= -tolerance; }
    bool stochastic_ok() const { return stochastic_slack >= -tolerance; }
    bool local_ok() const { return local_violations == 0; }
    bool passed() const { return argmin_ok() && deterministic_ok() && stochastic_ok() && local_ok(); }
};

inline nlohmann::json equivalence_report_to_json(const EquivalenceReport& r) {
    auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"certificate", certificate_to_json(r.certificate)},
            {"argmin_rates_equal", {{"pass", r.argmin_ok()}, {"gap", r.argmin_gap}}},
            {"deterministic_not_beaten", {{"pass", r.deterministic_ok()}, {"slack", r.deterministic_slack}}},
            {"stochastic_not_beaten",
             {{"pass", r.stochastic_ok()}, {"slack", finite_or_null(r.stochastic_slack)},
              {"samples", r.n_stochastic_samples}}},
            {"local_minima_transfer",
             {{"pass", r.local_ok()}, {"local_minima", r.n_local_minima}, {"violations", r.local_violations}}},
            {"tolerance", r.tolerance},
            {"pass", r.passed()}};
}

inline StochasticPolicy sample_dirichlet_policy(std::size_t n_states, std::size_t n_actions, Rng& rng,
                                                double alpha = 1.0) {
    std::vector<double> probs;
    probs.reserve(n_states * n_actions);
    for (std::size_t x = 0; x < n_states; ++x) {
        const auto row = sample_dirichlet(n_actions, alpha, rng);
        probs.insert(probs.end(), row.begin(), row.end());
    }
    return {n_states, n_actions, std::move(probs)};
}

/// Checks the deterministic-equivalence statements on one MDP. Single-state
/// deviation is the neighbourhood used for the local-minimum statement.
inline EquivalenceReport verify_equivalence_theorem(const TabularMdp& mdp, std::size_t n_stochastic_samples,
                                                    std::uint64_t seed, const OracleOptions& opts = {}) {
    EquivalenceReport rep;
    rep.certificate = min_entropy_deterministic(mdp, opts);
    const double h_star = rep.certificate.min_true_rate;
    rep.argmin_gap = std::abs(rep.certificate.min_surrogate_rate - h_star);

    const auto en = enumerate_deterministic_policies(mdp, opts.budget);
    const auto count = static_cast<std::size_t>(en.size());
    std::vector<double> hs(count), h(count);
    std::size_t k = 0;
    en.for_each([&](const DeterministicPolicy& pi) {
        const auto rep_pi = entropy_report(mdp, pi.to_stochastic());
        hs[k] = rep_pi.surrogate_rate;
        h[k] = rep_pi.rate;
        ++k;
    });
    rep.deterministic_slack = *std::min_element(h.begin(), h.end()) - h_star;

    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    std::vector<std::size_t> stride(n, 1);
    for (std::size_t pos = n - 1; pos-- > 0;) stride[pos] = stride[pos + 1] * m;
    for (std::size_t idx = 0; idx < count; ++idx) {
        bool min_s = true, min_h = true;
        for (std::size_t x = 0; x < n; ++x) {
            const std::size_t a = (idx / stride[x]) % m;
            for (std::size_t b = 0; b < m; ++b) {
                if (b == a) continue;
                const std::size_t j = idx - a * stride[x] + b * stride[x];
                if (hs[j] < hs[idx] - rep.tolerance) min_s = false;
                if (h[j] < h[idx] - rep.tolerance) min_h = false;
            }
        }
        if (min_s) {
            ++rep.n_local_minima;
            if (!min_h) ++rep.local_violations;
        }
    }

    auto rng = make_rng(seed);
    rep.n_stochastic_samples = n_stochastic_samples;
    for (std::size_t i = 0; i < n_stochastic_samples; ++i) {
        const auto pi = sample_dirichlet_policy(n, m, rng);
        rep.stochastic_slack = std::min(rep.stochastic_slack, entropy_rate_exact(mdp, pi) - h_star);
    }
    return rep;
}

}  // namespace parl
