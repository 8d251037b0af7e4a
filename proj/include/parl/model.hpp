#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/mdp.hpp"
#include "parl/rng.hpp"

namespace parl {

inline constexpr int kModelSchemaVersion = 1;

struct ObservedTransition {
    std::size_t x = 0;
    std::size_t u = 0;
    std::size_t y = 0;
};

/// Additive-smoothing count model: P_phi(x,u,y) = (c + alpha) / (N + n alpha).
/// Counts are kept sparse per pair so that entropy and TV error cost O(visited).
class CountModel {
public:
    CountModel() = default;

    CountModel(std::size_t n_states, std::size_t n_actions, double smoothing_alpha = 1.0)
        : n_states_(n_states), n_actions_(n_actions), alpha_(smoothing_alpha),
          counts_(n_states * n_actions), totals_(n_states * n_actions, 0) {
        if (n_states == 0 || n_actions == 0) throw std::invalid_argument("CountModel: empty state or action set");
        if (!(smoothing_alpha >= 0.0) || !std::isfinite(smoothing_alpha))
            throw std::invalid_argument("CountModel: smoothing_alpha must be nonnegative");
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double smoothing_alpha() const { return alpha_; }

    void update(std::size_t x, std::size_t u, std::size_t y, std::uint64_t times = 1) {
        if (x >= n_states_ || u >= n_actions_ || y >= n_states_)
            throw std::out_of_range(detail::concat("transition (", x, ",", u, ",", y, ") out of range"));
        auto& c = counts_[x * n_actions_ + u];
        auto it = std::lower_bound(c.begin(), c.end(), y, [](const auto& e, std::size_t v) { return e.first < v; });
        if (it != c.end() && it->first == y)
            it->second += times;
        else
            c.insert(it, {y, times});
        totals_[x * n_actions_ + u] += times;
    }

    void update_counts(std::span<const ObservedTransition> batch) {
        for (const auto& t : batch)
            if (t.x >= n_states_ || t.u >= n_actions_ || t.y >= n_states_)
                throw std::out_of_range(detail::concat("transition (", t.x, ",", t.u, ",", t.y, ") out of range"));
        for (const auto& t : batch) update(t.x, t.u, t.y);
    }

    std::uint64_t count(std::size_t x, std::size_t u, std::size_t y) const {
        for (const auto& [yy, c] : pair_counts(x, u))
            if (yy == y) return c;
        return 0;
    }

    std::uint64_t visits(std::size_t x, std::size_t u) const {
        check(x, u);
        return totals_[x * n_actions_ + u];
    }

    std::vector<double> estimated_row(std::size_t x, std::size_t u) const {
        const double denom = denominator(x, u);
        std::vector<double> row(n_states_, alpha_ / denom);
        for (const auto& [y, c] : pair_counts(x, u)) row[y] = (static_cast<double>(c) + alpha_) / denom;
        return row;
    }

    /// Plug-in entropy of the estimated row.
    double surrogate(std::size_t x, std::size_t u) const {
        const double denom = denominator(x, u);
        const auto& c = pair_counts(x, u);
        double h = 0.0;
        for (const auto& [y, k] : c) h += plogp_term((static_cast<double>(k) + alpha_) / denom);
        h += static_cast<double>(n_states_ - c.size()) * plogp_term(alpha_ / denom);
        return h;
    }

    /// TV distance between the estimated row and a sparse reference row.
    double tv_to(std::size_t x, std::size_t u, std::span<const Transition> truth) const {
        const double denom = denominator(x, u);
        const auto& c = pair_counts(x, u);
        const double base = alpha_ / denom;
        double l1 = 0.0;
        std::size_t union_size = 0;
        std::size_t i = 0, j = 0;
        while (i < c.size() || j < truth.size()) {
            std::size_t yi = i < c.size() ? c[i].first : n_states_;
            std::size_t yj = j < truth.size() ? truth[j].next : n_states_;
            const std::size_t y = std::min(yi, yj);
            const double p_hat = (yi == y) ? (static_cast<double>(c[i].second) + alpha_) / denom : base;
            const double p = (yj == y) ? truth[j].prob : 0.0;
            l1 += std::abs(p_hat - p);
            ++union_size;
            if (yi == y) ++i;
            if (yj == y) ++j;
        }
        l1 += static_cast<double>(n_states_ - union_size) * base;
        return 0.5 * l1;
    }

    const std::vector<std::pair<std::size_t, std::uint64_t>>& pair_counts(std::size_t x, std::size_t u) const {
        check(x, u);
        return counts_[x * n_actions_ + u];
    }

    CountModel snapshot() const { return *this; }

    nlohmann::json to_json() const {
        std::vector<std::array<std::uint64_t, 4>> triples;
        for (std::size_t x = 0; x < n_states_; ++x)
            for (std::size_t u = 0; u < n_actions_; ++u)
                for (const auto& [y, c] : counts_[x * n_actions_ + u]) triples.push_back({x, u, y, c});
        return {{"schema_version", kModelSchemaVersion},
                {"kind", "count"},
                {"n_states", n_states_},
                {"n_actions", n_actions_},
                {"smoothing_alpha", alpha_},
                {"counts", triples}};
    }

    static CountModel from_json(const nlohmann::json& j) {
        if (j.at("schema_version").get<int>() != kModelSchemaVersion)
            throw std::invalid_argument("unsupported model schema version");
        if (j.at("kind").get<std::string>() != "count") throw std::invalid_argument("not a count model");
        CountModel m(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>(),
                     j.at("smoothing_alpha").get<double>());
        for (const auto& t : j.at("counts")) {
            const auto v = t.get<std::array<std::uint64_t, 4>>();
            m.update(v[0], v[1], v[2], v[3]);
        }
        return m;
    }

    friend bool operator==(const CountModel&, const CountModel&) = default;

private:
    void check(std::size_t x, std::size_t u) const {
        if (x >= n_states_ || u >= n_actions_)
            throw std::out_of_range(detail::concat("state-action (", x, ",", u, ") out of range"));
    }

    double denominator(std::size_t x, std::size_t u) const {
        check(x, u);
        const auto total = totals_[x * n_actions_ + u];
        if (total == 0 && alpha_ == 0.0)
            throw std::domain_error(detail::concat("unvisited pair (", x, ",", u, ") with zero smoothing"));
        return static_cast<double>(total) + static_cast<double>(n_states_) * alpha_;
    }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    double alpha_ = 1.0;
    std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> counts_;
    std::vector<std::uint64_t> totals_;
};

inline CountModel update_counts(CountModel model, std::span<const ObservedTransition> batch) {
    model.update_counts(batch);
    return model;
}

inline double surrogate_from_model(const CountModel& model, std::size_t x, std::size_t u) {
    return model.surrogate(x, u);
}

/// Largest TV distance over all pairs: the epsilon of the continuity bound.
inline double model_tv_error(const CountModel& model, const TabularMdp& mdp) {
    if (model.n_states() != mdp.n_states() || model.n_actions() != mdp.n_actions())
        throw std::invalid_argument("model and MDP shapes differ");
    double eps = 0.0;
    for (std::size_t x = 0; x < mdp.n_states(); ++x)
        for (std::size_t u = 0; u < mdp.n_actions(); ++u) {
            // An unsmoothed model has no estimate for an unvisited pair; count it as maximally wrong.
            if (model.smoothing_alpha() == 0.0 && model.visits(x, u) == 0) return 1.0;
            eps = std::max(eps, model.tv_to(x, u, mdp.row(x, u)));
        }
    return eps;
}

enum class SignalMode { log, raw };

inline SignalMode parse_signal_mode(const std::string& s) {
    if (s == "log") return SignalMode::log;
    if (s == "raw") return SignalMode::raw;
    throw std::invalid_argument("signal_mode must be \"log\" or \"raw\", got \"" + s + "\"");
}

inline std::string to_string(SignalMode m) { return m == SignalMode::log ? "log" : "raw"; }

struct VectorTransition {
    std::size_t x = 0;
    std::size_t u = 0;
    Eigen::VectorXd y;
};

/// Mean predictor f(x,u) linear in one-hot (x,u) features, plus a running mean of
/// squared prediction error per pair. The entropy signal is ln(max(mean, floor))
/// in log mode and the mean itself in raw mode.
class GaussianEntropyModel {
public:
    /// Differential-entropy offset of a unit Gaussian; display only.
    static constexpr double kOffset = 0.5 * (1.8378770664093453 + 1.0);

    GaussianEntropyModel() = default;

    GaussianEntropyModel(std::size_t n_states, std::size_t n_actions, std::size_t dim,
                         SignalMode mode = SignalMode::log, double variance_floor = 1e-8)
        : n_states_(n_states), n_actions_(n_actions), dim_(dim), mode_(mode), floor_(variance_floor),
          weights_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n_states * n_actions))),
          sq_err_(n_states * n_actions, 0.0), n_(n_states * n_actions, 0) {
        if (n_states == 0 || n_actions == 0 || dim == 0) throw std::invalid_argument("GaussianEntropyModel: empty shape");
        if (!(variance_floor > 0.0)) throw std::invalid_argument("variance_floor must be positive");
    }

    std::size_t dim() const { return dim_; }
    SignalMode mode() const { return mode_; }
    double variance_floor() const { return floor_; }

    Eigen::VectorXd predict(std::size_t x, std::size_t u) const { return weights_.col(col(x, u)); }

    double sq_error_mean(std::size_t x, std::size_t u) const { return sq_err_[static_cast<std::size_t>(col(x, u))]; }

    double signal_from(double mean_sq) const {
        return mode_ == SignalMode::log ? std::log(std::max(mean_sq, floor_)) : mean_sq;
    }

    /// Current estimate without updating.
    double estimate(std::size_t x, std::size_t u) const { return signal_from(sq_error_mean(x, u)); }

    /// Updates the running mean with the residual of y and returns the new estimate.
    double observe(std::size_t x, std::size_t u, const Eigen::VectorXd& y) {
        const auto c = col(x, u);
        if (y.size() != static_cast<Eigen::Index>(dim_)) throw std::invalid_argument("observation has wrong dimension");
        const double r2 = (weights_.col(c) - y).squaredNorm();
        const auto i = static_cast<std::size_t>(c);
        ++n_[i];
        sq_err_[i] += (r2 - sq_err_[i]) / static_cast<double>(n_[i]);
        return signal_from(sq_err_[i]);
    }

    /// Same as observe() with a precomputed residual vector (used for synthetic checks).
    double observe_residual(std::size_t x, std::size_t u, double residual_sq) {
        const auto i = static_cast<std::size_t>(col(x, u));
        ++n_[i];
        sq_err_[i] += (residual_sq - sq_err_[i]) / static_cast<double>(n_[i]);
        return signal_from(sq_err_[i]);
    }

    /// L = 1/(2|D|) sum ||f(x,u) - y||^2
    double loss(std::span<const VectorTransition> batch) const {
        if (batch.empty()) throw std::invalid_argument("empty batch");
        double l = 0.0;
        for (const auto& t : batch) l += (weights_.col(col(t.x, t.u)) - t.y).squaredNorm();
        return l / (2.0 * static_cast<double>(batch.size()));
    }

    /// One gradient step on loss(batch).
    void train_mean_predictor(std::span<const VectorTransition> batch, double rate) {
        if (batch.empty()) throw std::invalid_argument("train_mean_predictor: empty batch");
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(weights_.rows(), weights_.cols());
        for (const auto& t : batch) {
            if (t.y.size() != static_cast<Eigen::Index>(dim_)) throw std::invalid_argument("observation has wrong dimension");
            const auto c = col(t.x, t.u);
            grad.col(c) += weights_.col(c) - t.y;
        }
        weights_ -= (rate / static_cast<double>(batch.size())) * grad;
    }

    GaussianEntropyModel snapshot() const { return *this; }

    nlohmann::json to_json() const {
        std::vector<double> w(weights_.data(), weights_.data() + weights_.size());
        return {{"schema_version", kModelSchemaVersion},
                {"kind", "gaussian"},
                {"n_states", n_states_},
                {"n_actions", n_actions_},
                {"dim", dim_},
                {"signal_mode", to_string(mode_)},
                {"variance_floor", floor_},
                {"weights", w},
                {"sq_error_mean", sq_err_},
                {"n_observed", n_}};
    }

    static GaussianEntropyModel from_json(const nlohmann::json& j) {
        if (j.at("schema_version").get<int>() != kModelSchemaVersion)
            throw std::invalid_argument("unsupported model schema version");
        if (j.at("kind").get<std::string>() != "gaussian") throw std::invalid_argument("not a gaussian model");
        GaussianEntropyModel m(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>(),
                               j.at("dim").get<std::size_t>(), parse_signal_mode(j.at("signal_mode").get<std::string>()),
                               j.at("variance_floor").get<double>());
        const auto w = j.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != m.weights_.size()) throw std::invalid_argument("weights have wrong size");
        std::copy(w.begin(), w.end(), m.weights_.data());
        m.sq_err_ = j.at("sq_error_mean").get<std::vector<double>>();
        m.n_ = j.at("n_observed").get<std::vector<std::uint64_t>>();
        if (m.sq_err_.size() != m.n_states_ * m.n_actions_ || m.n_.size() != m.sq_err_.size())
            throw std::invalid_argument("running means have wrong size");
        return m;
    }

    bool operator==(const GaussianEntropyModel& o) const {
        return n_states_ == o.n_states_ && n_actions_ == o.n_actions_ && dim_ == o.dim_ && mode_ == o.mode_ &&
               floor_ == o.floor_ && weights_ == o.weights_ && sq_err_ == o.sq_err_ && n_ == o.n_;
    }

private:
    Eigen::Index col(std::size_t x, std::size_t u) const {
        if (x >= n_states_ || u >= n_actions_)
            throw std::out_of_range(detail::concat("state-action (", x, ",", u, ") out of range"));
        return static_cast<Eigen::Index>(x * n_actions_ + u);
    }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::size_t dim_ = 0;
    SignalMode mode_ = SignalMode::log;
    double floor_ = 1e-8;
    Eigen::MatrixXd weights_;
    std::vector<double> sq_err_;
    std::vector<std::uint64_t> n_;
};

/// Model-only replay: unbounded (or FIFO-capped) storage with uniform sampling.
template <class T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

    void add(T item) {
        if (capacity_ > 0 && items_.size() == capacity_) {
            items_[head_] = std::move(item);
            head_ = (head_ + 1) % capacity_;
        } else {
            items_.push_back(std::move(item));
        }
    }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const T& operator[](std::size_t i) const { return items_[i]; }

    std::vector<T> sample(std::size_t batch, Rng& rng) const {
        if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
        std::vector<T> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[uniform_index(items_.size(), rng)]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

}  // namespace parl
