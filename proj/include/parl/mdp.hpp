#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace parl {

/// Absolute tolerance for every probability-row check.
inline constexpr double kProbabilityTolerance = 1e-12;

/// Raised when a chain has no unique stationary distribution (multiple closed
/// classes), or a linear system that presumes one is singular.
class NotErgodicError : public std::runtime_error {
public:
    explicit NotErgodicError(const std::string& what)
        : std::runtime_error("chain not ergodic: " + what) {}
};

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    os.precision(17);
    (os << ... << args);
    return os.str();
}

inline void check_probability_vector(std::span<const double> p, const std::string& name) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0 || p[i] > 1.0)
            throw std::invalid_argument(concat(name, "[", i, "] = ", p[i], " is not a probability"));
        total += p[i];
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
        throw std::invalid_argument(concat(name, " sums to ", total, ", expected 1"));
}

}  // namespace detail

/// One successor of a state-action pair.
struct Transition {
    std::size_t next = 0;
    double prob = 0.0;
    double reward = 0.0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Finite MDP (X, U, P, R, mu0). Rows are stored sparsely, sorted by successor,
/// so that large product-state environments stay cheap; zero-probability
/// entries are kept only when they carry a nonzero reward.
class TabularMdp {
public:
    TabularMdp() = default;

    TabularMdp(std::size_t n_states, std::size_t n_actions,
               std::vector<std::vector<Transition>> rows, std::vector<double> mu0)
        : n_states_(n_states), n_actions_(n_actions), rows_(std::move(rows)), mu0_(std::move(mu0)) {
        validate();
    }

    /// Builds from dense [x][u][y] tensors; reward may be empty for an all-zero reward.
    static TabularMdp from_dense(const std::vector<std::vector<std::vector<double>>>& transition,
                                 const std::vector<std::vector<std::vector<double>>>& reward,
                                 std::vector<double> mu0) {
        const std::size_t n = transition.size();
        if (n == 0) throw std::invalid_argument("transition tensor is empty");
        const std::size_t m = transition[0].size();
        if (m == 0) throw std::invalid_argument("transition tensor has no actions");
        if (!reward.empty() && reward.size() != n)
            throw std::invalid_argument(detail::concat("reward has ", reward.size(), " states, expected ", n));
        std::vector<std::vector<Transition>> rows(n * m);
        for (std::size_t x = 0; x < n; ++x) {
            if (transition[x].size() != m)
                throw std::invalid_argument(detail::concat("transition[", x, "] has ", transition[x].size(),
                                                           " actions, expected ", m));
            if (!reward.empty() && reward[x].size() != m)
                throw std::invalid_argument(detail::concat("reward[", x, "] has ", reward[x].size(),
                                                           " actions, expected ", m));
            for (std::size_t u = 0; u < m; ++u) {
                const auto& prow = transition[x][u];
                if (prow.size() != n)
                    throw std::invalid_argument(detail::concat("transition[", x, "][", u, "] has ", prow.size(),
                                                               " successors, expected ", n));
                if (!reward.empty() && reward[x][u].size() != n)
                    throw std::invalid_argument(detail::concat("reward[", x, "][", u, "] has ",
                                                               reward[x][u].size(), " successors, expected ", n));
                for (std::size_t y = 0; y < n; ++y) {
                    const double r = reward.empty() ? 0.0 : reward[x][u][y];
                    if (prow[y] != 0.0 || r != 0.0) rows[x * m + u].push_back({y, prow[y], r});
                }
            }
        }
        return TabularMdp(n, m, std::move(rows), std::move(mu0));
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    const std::vector<double>& mu0() const { return mu0_; }

    std::span<const Transition> row(std::size_t x, std::size_t u) const {
        check_pair(x, u);
        return rows_[x * n_actions_ + u];
    }

    double transition(std::size_t x, std::size_t u, std::size_t y) const {
        const auto* t = find(x, u, y);
        return t ? t->prob : 0.0;
    }

    double reward(std::size_t x, std::size_t u, std::size_t y) const {
        const auto* t = find(x, u, y);
        return t ? t->reward : 0.0;
    }

    /// R(x,u) = sum_y P(x,u,y) R(x,u,y).
    double expected_reward(std::size_t x, std::size_t u) const {
        double r = 0.0;
        for (const auto& t : row(x, u)) r += t.prob * t.reward;
        return r;
    }

    /// Same dynamics with every reward replaced by `f(x, u, y)`.
    template <class F>
    TabularMdp with_rewards(F&& f) const {
        auto rows = rows_;
        for (std::size_t x = 0; x < n_states_; ++x)
            for (std::size_t u = 0; u < n_actions_; ++u)
                for (auto& t : rows[x * n_actions_ + u]) t.reward = f(x, u, t.next);
        return TabularMdp(n_states_, n_actions_, std::move(rows), mu0_);
    }

    /// Rows rescaled to sum to one. Only applied on explicit request.
    static std::vector<std::vector<Transition>> renormalized(std::vector<std::vector<Transition>> rows) {
        for (auto& r : rows) {
            double total = 0.0;
            for (const auto& t : r) total += t.prob;
            if (total > 0.0)
                for (auto& t : r) t.prob /= total;
        }
        return rows;
    }

    friend bool operator==(const TabularMdp&, const TabularMdp&) = default;

private:
    void check_pair(std::size_t x, std::size_t u) const {
        if (x >= n_states_ || u >= n_actions_)
            throw std::out_of_range(detail::concat("state-action (", x, ",", u, ") out of range"));
    }

    const Transition* find(std::size_t x, std::size_t u, std::size_t y) const {
        const auto r = row(x, u);
        auto it = std::lower_bound(r.begin(), r.end(), y,
                                   [](const Transition& t, std::size_t v) { return t.next < v; });
        return (it != r.end() && it->next == y) ? &*it : nullptr;
    }

    void validate() {
        if (n_states_ == 0) throw std::invalid_argument("n_states must be positive");
        if (n_actions_ == 0) throw std::invalid_argument("n_actions must be positive");
        if (rows_.size() != n_states_ * n_actions_)
            throw std::invalid_argument(detail::concat("expected ", n_states_ * n_actions_, " rows, got ",
                                                       rows_.size()));
        if (mu0_.size() != n_states_)
            throw std::invalid_argument(detail::concat("mu0 has ", mu0_.size(), " entries, expected ", n_states_));
        for (std::size_t x = 0; x < n_states_; ++x) {
            for (std::size_t u = 0; u < n_actions_; ++u) {
                auto& r = rows_[x * n_actions_ + u];
                std::sort(r.begin(), r.end(), [](const Transition& a, const Transition& b) { return a.next < b.next; });
                double total = 0.0;
                for (std::size_t i = 0; i < r.size(); ++i) {
                    const auto& t = r[i];
                    if (t.next >= n_states_)
                        throw std::invalid_argument(detail::concat("transition (", x, ",", u, ",", t.next,
                                                                   ") has successor out of range"));
                    if (i > 0 && r[i - 1].next == t.next)
                        throw std::invalid_argument(detail::concat("transition (", x, ",", u, ",", t.next,
                                                                   ") is duplicated"));
                    if (!std::isfinite(t.prob) || t.prob < 0.0 || t.prob > 1.0)
                        throw std::invalid_argument(detail::concat("transition[", x, "][", u, "][", t.next,
                                                                   "] = ", t.prob, " is not in [0,1]"));
                    if (!std::isfinite(t.reward))
                        throw std::invalid_argument(detail::concat("reward[", x, "][", u, "][", t.next,
                                                                   "] is not finite"));
                    total += t.prob;
                }
                if (std::abs(total - 1.0) > kProbabilityTolerance)
                    throw std::invalid_argument(detail::concat("transition[", x, "][", u, "] sums to ", total,
                                                               ", expected 1"));
            }
        }
        detail::check_probability_vector(mu0_, "mu0");
    }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<std::vector<Transition>> rows_;
    std::vector<double> mu0_;
};

/// pi(u|x) stored row-major.
class StochasticPolicy {
public:
    StochasticPolicy() = default;

    StochasticPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
        : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
        if (probs_.size() != n_states_ * n_actions_)
            throw std::invalid_argument(detail::concat("policy has ", probs_.size(), " entries, expected ",
                                                       n_states_ * n_actions_));
        for (std::size_t x = 0; x < n_states_; ++x)
            detail::check_probability_vector(row(x), detail::concat("policy row ", x));
    }

    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions) {
        return {n_states, n_actions,
                std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }

    double operator()(std::size_t x, std::size_t u) const { return probs_.at(x * n_actions_ + u); }

    std::span<const double> row(std::size_t x) const {
        if (x >= n_states_) throw std::out_of_range(detail::concat("policy state ", x, " out of range"));
        return std::span<const double>(probs_).subspan(x * n_actions_, n_actions_);
    }

    const std::vector<double>& probs() const { return probs_; }

    friend bool operator==(const StochasticPolicy&, const StochasticPolicy&) = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<double> probs_;
};

class DeterministicPolicy {
public:
    DeterministicPolicy() = default;

    DeterministicPolicy(std::vector<std::size_t> actions, std::size_t n_actions)
        : actions_(std::move(actions)), n_actions_(n_actions) {
        for (std::size_t x = 0; x < actions_.size(); ++x)
            if (actions_[x] >= n_actions_)
                throw std::invalid_argument(detail::concat("action ", actions_[x], " at state ", x,
                                                           " exceeds n_actions ", n_actions_));
    }

    std::size_t n_states() const { return actions_.size(); }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t operator[](std::size_t x) const { return actions_.at(x); }
    const std::vector<std::size_t>& actions() const { return actions_; }

    StochasticPolicy to_stochastic() const {
        std::vector<double> p(actions_.size() * n_actions_, 0.0);
        for (std::size_t x = 0; x < actions_.size(); ++x) p[x * n_actions_ + actions_[x]] = 1.0;
        return {actions_.size(), n_actions_, std::move(p)};
    }

    friend bool operator==(const DeterministicPolicy&, const DeterministicPolicy&) = default;
    friend auto operator<=>(const DeterministicPolicy& a, const DeterministicPolicy& b) {
        return a.actions_ <=> b.actions_;
    }

private:
    std::vector<std::size_t> actions_;
    std::size_t n_actions_ = 0;
};

struct ChainEntry {
    std::size_t next = 0;
    double prob = 0.0;
    friend bool operator==(const ChainEntry&, const ChainEntry&) = default;
};

/// Markov chain (X, P, mu0) with sparse rows.
class MarkovChain {
public:
    MarkovChain() = default;

    MarkovChain(std::vector<std::vector<ChainEntry>> rows, std::vector<double> mu0)
        : rows_(std::move(rows)), mu0_(std::move(mu0)) {
        const std::size_t n = rows_.size();
        if (n == 0) throw std::invalid_argument("chain has no states");
        if (mu0_.size() != n)
            throw std::invalid_argument(detail::concat("mu0 has ", mu0_.size(), " entries, expected ", n));
        for (std::size_t x = 0; x < n; ++x) {
            auto& r = rows_[x];
            std::sort(r.begin(), r.end(), [](const ChainEntry& a, const ChainEntry& b) { return a.next < b.next; });
            double total = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (r[i].next >= n)
                    throw std::invalid_argument(detail::concat("chain row ", x, " has successor out of range"));
                if (i > 0 && r[i - 1].next == r[i].next)
                    throw std::invalid_argument(detail::concat("chain row ", x, " has duplicate successor ",
                                                               r[i].next));
                if (!std::isfinite(r[i].prob) || r[i].prob < 0.0 || r[i].prob > 1.0)
                    throw std::invalid_argument(detail::concat("P(", x, ",", r[i].next, ") = ", r[i].prob,
                                                               " is not a probability"));
                total += r[i].prob;
            }
            if (std::abs(total - 1.0) > kProbabilityTolerance)
                throw std::invalid_argument(detail::concat("chain row ", x, " sums to ", total, ", expected 1"));
        }
        detail::check_probability_vector(mu0_, "mu0");
    }

    static MarkovChain from_dense(const std::vector<std::vector<double>>& p, std::vector<double> mu0) {
        std::vector<std::vector<ChainEntry>> rows(p.size());
        for (std::size_t x = 0; x < p.size(); ++x) {
            if (p[x].size() != p.size())
                throw std::invalid_argument(detail::concat("chain row ", x, " has wrong length"));
            for (std::size_t y = 0; y < p.size(); ++y)
                if (p[x][y] != 0.0) rows[x].push_back({y, p[x][y]});
        }
        return {std::move(rows), std::move(mu0)};
    }

    std::size_t n_states() const { return rows_.size(); }
    std::span<const ChainEntry> row(std::size_t x) const { return rows_.at(x); }
    const std::vector<double>& mu0() const { return mu0_; }

    double operator()(std::size_t x, std::size_t y) const {
        for (const auto& e : rows_.at(x))
            if (e.next == y) return e.prob;
        return 0.0;
    }

    /// out = mu P
    void left_multiply(std::span<const double> mu, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t x = 0; x < rows_.size(); ++x) {
            const double w = mu[x];
            if (w == 0.0) continue;
            for (const auto& e : rows_[x]) out[e.next] += w * e.prob;
        }
    }

    Eigen::MatrixXd dense() const {
        const auto n = static_cast<Eigen::Index>(rows_.size());
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t x = 0; x < rows_.size(); ++x)
            for (const auto& e : rows_[x]) p(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(e.next)) = e.prob;
        return p;
    }

private:
    std::vector<std::vector<ChainEntry>> rows_;
    std::vector<double> mu0_;
};

/// P_pi(x,y) = sum_u pi(u|x) P(x,u,y). Zero-weight actions do not contribute,
/// so the support of the result follows the support of the policy.
inline MarkovChain compose(const TabularMdp& mdp, const StochasticPolicy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
        throw std::invalid_argument(detail::concat("policy is ", policy.n_states(), "x", policy.n_actions(),
                                                   " but MDP is ", mdp.n_states(), "x", mdp.n_actions()));
    const std::size_t n = mdp.n_states();
    std::vector<std::vector<ChainEntry>> rows(n);
    std::vector<double> scratch(n, 0.0);
    std::vector<std::size_t> touched;
    for (std::size_t x = 0; x < n; ++x) {
        touched.clear();
        for (std::size_t u = 0; u < mdp.n_actions(); ++u) {
            const double w = policy(x, u);
            if (w == 0.0) continue;
            for (const auto& t : mdp.row(x, u)) {
                if (t.prob == 0.0) continue;
                if (scratch[t.next] == 0.0) touched.push_back(t.next);
                scratch[t.next] += w * t.prob;
            }
        }
        std::sort(touched.begin(), touched.end());
        auto& r = rows[x];
        r.reserve(touched.size());
        for (auto y : touched) {
            r.push_back({y, scratch[y]});
            scratch[y] = 0.0;
        }
    }
    return {std::move(rows), mdp.mu0()};
}

inline MarkovChain compose(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    return compose(mdp, policy.to_stochastic());
}

/// R^pi_x = sum_u pi(u|x) R(x,u).
inline std::vector<double> state_rewards(const TabularMdp& mdp, const StochasticPolicy& policy) {
    std::vector<double> r(mdp.n_states(), 0.0);
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        for (std::size_t u = 0; u < mdp.n_actions(); ++u)
            if (policy(x, u) != 0.0) r[x] += policy(x, u) * mdp.expected_reward(x, u);
    return r;
}

struct StationaryOptions {
    double tol = 1e-10;
    std::size_t max_iter = 100'000;
    /// Starting vector for power iteration; defaults to the chain's mu0.
    std::optional<std::vector<double>> initial;
};

namespace detail {

inline double l1_residual(const MarkovChain& mc, std::span<const double> mu, std::vector<double>& scratch) {
    mc.left_multiply(mu, scratch);
    double r = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) r += std::abs(scratch[i] - mu[i]);
    return r;
}

/// Solves mu (P - I) = 0 with sum(mu) = 1 by replacing the last balance
/// equation with the normalization row. Throws NotErgodicError when singular.
inline std::vector<double> stationary_linear_solve(const MarkovChain& mc) {
    const std::size_t n = mc.n_states();
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    rhs(N - 1) = 1.0;
    Eigen::VectorXd sol;
    if (n <= 400) {
        // A = (P - I)^T with its last row replaced by ones.
        Eigen::MatrixXd a = mc.dense().transpose();
        a.diagonal().array() -= 1.0;
        a.row(N - 1).setOnes();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        lu.setThreshold(1e-11);
        if (!lu.isInvertible()) throw NotErgodicError("stationary system is singular");
        sol = lu.solve(rhs);
    } else {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t x = 0; x < n; ++x) {
            for (const auto& e : mc.row(x)) {
                if (e.next == n - 1) continue;
                trip.emplace_back(static_cast<Eigen::Index>(e.next), static_cast<Eigen::Index>(x), e.prob);
            }
        }
        for (std::size_t x = 0; x + 1 < n; ++x)
            trip.emplace_back(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x), -1.0);
        for (std::size_t x = 0; x < n; ++x) trip.emplace_back(N - 1, static_cast<Eigen::Index>(x), 1.0);
        Eigen::SparseMatrix<double> a(N, N);
        a.setFromTriplets(trip.begin(), trip.end());
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success) throw NotErgodicError("stationary system is singular");
        sol = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !sol.allFinite()) throw NotErgodicError("stationary solve failed");
        if ((a * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8) throw NotErgodicError("stationary system is singular");
    }
    std::vector<double> mu(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = sol(static_cast<Eigen::Index>(i));
        if (!std::isfinite(v) || v < -1e-9) throw NotErgodicError("stationary solve produced negative mass");
        mu[i] = std::max(v, 0.0);
        total += mu[i];
    }
    for (auto& v : mu) v /= total;
    return mu;
}

}  // namespace detail

/// Stationary distribution by power iteration on the lazy chain (P + I)/2,
/// falling back to a direct linear solve when the iteration stalls or runs
/// out of iterations. The lazy chain has the same fixed points and removes
/// periodic oscillation.
inline std::vector<double> stationary_distribution(const MarkovChain& mc, const StationaryOptions& opts = {}) {
    const std::size_t n = mc.n_states();
    std::vector<double> mu = opts.initial ? *opts.initial : mc.mu0();
    if (mu.size() != n) throw std::invalid_argument("initial vector has wrong length");
    std::vector<double> next(n), scratch(n);
    constexpr std::size_t kWindow = 128;
    double window_start_residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        mc.left_multiply(mu, next);
        double residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            residual += std::abs(next[i] - mu[i]);
            next[i] = 0.5 * (next[i] + mu[i]);
        }
        if (residual <= opts.tol) {
            const double total = std::accumulate(mu.begin(), mu.end(), 0.0);
            for (auto& v : mu) v /= total;
            return mu;
        }
        mu.swap(next);
        if (it % kWindow == 0) {
            // Less than halving the residual over a window counts as a stall.
            if (it > 0 && residual > 0.5 * window_start_residual) break;
            window_start_residual = residual;
        }
    }
    auto solved = detail::stationary_linear_solve(mc);
    if (detail::l1_residual(mc, solved, scratch) > std::max(opts.tol, 1e-9))
        throw NotErgodicError("stationary solve residual too large");
    return solved;
}

struct GainBias {
    double gain = 0.0;
    std::vector<double> bias;
};

/// Gain g = mu . R and bias b = (I - P + P*)^{-1} (I - P*) R with P* = 1 mu^T.
inline GainBias gain_and_bias(const MarkovChain& mc, std::span<const double> state_reward) {
    const std::size_t n = mc.n_states();
    if (state_reward.size() != n)
        throw std::invalid_argument(detail::concat("state reward has ", state_reward.size(), " entries, expected ", n));
    for (std::size_t x = 0; x < n; ++x)
        if (!std::isfinite(state_reward[x])) throw std::invalid_argument(detail::concat("reward at ", x, " not finite"));
    const auto mu = stationary_distribution(mc);
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::Map<const Eigen::VectorXd> r(state_reward.data(), N);
    Eigen::Map<const Eigen::VectorXd> m(mu.data(), N);
    const double gain = m.dot(r);
    Eigen::MatrixXd a = -mc.dense();
    a.diagonal().array() += 1.0;
    a += Eigen::VectorXd::Ones(N) * m.transpose();
    Eigen::VectorXd rhs = r - Eigen::VectorXd::Constant(N, gain);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-11);
    if (!lu.isInvertible()) throw NotErgodicError("I - P + P* is singular");
    Eigen::VectorXd b = lu.solve(rhs);
    return {gain, std::vector<double>(b.data(), b.data() + N)};
}

struct ErgodicityReport {
    bool irreducible = false;
    bool aperiodic = false;
    std::size_t period = 0;
    /// False when n_actions^n_states exceeded the budget ("uniform-policy check only").
    bool deterministic_checked = false;
    bool all_deterministic_ergodic = false;
    std::uint64_t deterministic_violations = 0;
    std::string scope;

    bool ergodic() const { return irreducible && aperiodic; }
};

namespace detail {

struct SupportCheck {
    bool irreducible = false;
    std::size_t period = 0;
};

/// Strong connectivity by forward/backward reachability from state 0, and the
/// period as gcd over edges u->v of level(u) + 1 - level(v) of a BFS tree.
template <class Successors>
SupportCheck check_support(std::size_t n, Successors&& successors) {
    std::vector<std::vector<std::size_t>> fwd(n), bwd(n);
    for (std::size_t x = 0; x < n; ++x)
        successors(x, [&](std::size_t y) {
            fwd[x].push_back(y);
            bwd[y].push_back(x);
        });
    auto reach = [n](const std::vector<std::vector<std::size_t>>& g, std::vector<long long>& level) {
        level.assign(n, -1);
        std::vector<std::size_t> queue{0};
        level[0] = 0;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const auto x = queue[head];
            for (auto y : g[x])
                if (level[y] < 0) {
                    level[y] = level[x] + 1;
                    queue.push_back(y);
                }
        }
        return queue.size() == n;
    };
    std::vector<long long> level, back_level;
    SupportCheck out;
    out.irreducible = reach(fwd, level) && reach(bwd, back_level);
    if (!out.irreducible) return out;
    long long g = 0;
    for (std::size_t x = 0; x < n; ++x)
        for (auto y : fwd[x]) g = std::gcd(g, std::abs(level[x] + 1 - level[y]));
    out.period = static_cast<std::size_t>(g);
    return out;
}

}  // namespace detail

/// Irreducibility/aperiodicity of the uniform-policy chain plus, when
/// n_actions^n_states <= budget, the same check for every deterministic policy.
inline ErgodicityReport check_ergodicity(const TabularMdp& mdp, std::uint64_t enumeration_budget = 4096) {
    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    ErgodicityReport rep;
    const auto uniform = detail::check_support(n, [&](std::size_t x, auto&& emit) {
        std::vector<std::size_t> seen;
        for (std::size_t u = 0; u < m; ++u)
            for (const auto& t : mdp.row(x, u))
                if (t.prob > 0.0) seen.push_back(t.next);
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        for (auto y : seen) emit(y);
    });
    rep.irreducible = uniform.irreducible;
    rep.period = uniform.period;
    rep.aperiodic = uniform.irreducible && uniform.period == 1;

    std::uint64_t count = 1;
    bool within = true;
    for (std::size_t x = 0; x < n && within; ++x) {
        if (count > enumeration_budget / m) within = false;
        count *= m;
    }
    within = within && count <= enumeration_budget;
    if (!within) {
        rep.scope = "uniform-policy check only";
        return rep;
    }
    rep.deterministic_checked = true;
    rep.scope = "uniform policy and all deterministic policies";
    std::vector<std::size_t> actions(n, 0);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto res = detail::check_support(n, [&](std::size_t x, auto&& emit) {
            for (const auto& t : mdp.row(x, actions[x]))
                if (t.prob > 0.0) emit(t.next);
        });
        if (!(res.irreducible && res.period == 1)) ++rep.deterministic_violations;
        for (std::size_t pos = n; pos-- > 0;) {
            if (++actions[pos] < m) break;
            actions[pos] = 0;
        }
    }
    rep.all_deterministic_ergodic = rep.deterministic_violations == 0;
    return rep;
}

}  // namespace parl
