#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "parl/mdp.hpp"

namespace parl {

// All entropies are in nats.

/// -p ln p with the 0 ln 0 = 0 convention.
inline double plogp_term(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

inline double shannon_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h += plogp_term(v);
    return h;
}

/// l(x) = -sum_y P(x,y) ln P(x,y)
inline double local_entropy(const MarkovChain& mc, std::size_t x) {
    double h = 0.0;
    for (const auto& e : mc.row(x)) h += plogp_term(e.prob);
    return h;
}

/// s(x,u) = -sum_y P(x,u,y) ln P(x,u,y)
inline double surrogate_entropy(const TabularMdp& mdp, std::size_t x, std::size_t u) {
    double h = 0.0;
    for (const auto& t : mdp.row(x, u)) h += plogp_term(t.prob);
    return h;
}

/// Table of s(x,u), row-major.
inline std::vector<double> surrogate_table(const TabularMdp& mdp) {
    std::vector<double> s(mdp.n_states() * mdp.n_actions());
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        for (std::size_t u = 0; u < mdp.n_actions(); ++u) s[x * mdp.n_actions() + u] = surrogate_entropy(mdp, x, u);
    return s;
}

struct EntropyReport {
    std::vector<double> local;
    double rate = 0.0;
    double surrogate_rate = 0.0;
    std::vector<double> stationary;
};

inline EntropyReport entropy_report(const TabularMdp& mdp, const StochasticPolicy& policy) {
    const auto mc = compose(mdp, policy);
    EntropyReport rep;
    rep.stationary = stationary_distribution(mc);
    rep.local.resize(mdp.n_states());
    for (std::size_t x = 0; x < mdp.n_states(); ++x) {
        rep.local[x] = local_entropy(mc, x);
        rep.rate += rep.stationary[x] * rep.local[x];
        double es = 0.0;
        for (std::size_t u = 0; u < mdp.n_actions(); ++u)
            if (policy(x, u) > 0.0) es += policy(x, u) * surrogate_entropy(mdp, x, u);
        rep.surrogate_rate += rep.stationary[x] * es;
    }
    return rep;
}

/// h = sum_x mu(x) l(x)
inline double entropy_rate_exact(const TabularMdp& mdp, const StochasticPolicy& policy) {
    return entropy_report(mdp, policy).rate;
}

inline double entropy_rate_exact(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    return entropy_rate_exact(mdp, policy.to_stochastic());
}

/// h_s = sum_x mu(x) sum_u pi(u|x) s(x,u)
inline double surrogate_rate_exact(const TabularMdp& mdp, const StochasticPolicy& policy) {
    return entropy_report(mdp, policy).surrogate_rate;
}

inline double surrogate_rate_exact(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    return surrogate_rate_exact(mdp, policy.to_stochastic());
}

/// K(eps) = eps ln(card - 1) - eps ln eps - (1 - eps) ln(1 - eps)
inline double fannes_bound(double epsilon, std::size_t cardinality) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument(detail::concat("fannes_bound: epsilon ", epsilon, " outside [0,1]"));
    if (cardinality < 2) throw std::invalid_argument("fannes_bound: cardinality must be at least 2");
    return epsilon * std::log(static_cast<double>(cardinality - 1)) + plogp_term(epsilon) + plogp_term(1.0 - epsilon);
}

/// Mean of s_fn over the visited (x,u) pairs.
template <class SFn>
double empirical_surrogate_rate(std::span<const std::pair<std::size_t, std::size_t>> trajectory, SFn&& s_fn) {
    if (trajectory.empty()) throw std::invalid_argument("empirical_surrogate_rate: empty trajectory");
    double total = 0.0;
    for (const auto& [x, u] : trajectory) total += s_fn(x, u);
    return total / static_cast<double>(trajectory.size());
}

/// (1/2) sum_i |p_i - q_i|
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw std::invalid_argument(detail::concat("tv_distance: lengths ", p.size(), " and ", q.size(), " differ"));
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
    return 0.5 * d;
}

}  // namespace parl
