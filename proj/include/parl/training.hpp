#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/envs.hpp"
#include "parl/mdp.hpp"
#include "parl/model.hpp"
#include "parl/rng.hpp"

namespace parl {

/// Tabular softmax policy over logits theta(x,u).
class SoftmaxPolicy {
public:
    SoftmaxPolicy() = default;
    SoftmaxPolicy(std::size_t n_states, std::size_t n_actions)
        : n_(n_states), m_(n_actions), logits_(n_states * n_actions, 0.0) {
        if (n_states == 0 || n_actions == 0) throw std::invalid_argument("SoftmaxPolicy: empty shape");
    }

    std::size_t n_states() const { return n_; }
    std::size_t n_actions() const { return m_; }

    double& logit(std::size_t x, std::size_t u) { return logits_.at(x * m_ + u); }
    double logit(std::size_t x, std::size_t u) const { return logits_.at(x * m_ + u); }
    std::vector<double>& logits() { return logits_; }
    const std::vector<double>& logits() const { return logits_; }

    void probs(std::size_t x, std::span<double> out) const {
        if (x >= n_) throw std::out_of_range("policy state out of range");
        const double* l = logits_.data() + x * m_;
        const double mx = *std::max_element(l, l + m_);
        double z = 0.0;
        for (std::size_t u = 0; u < m_; ++u) z += (out[u] = std::exp(l[u] - mx));
        for (std::size_t u = 0; u < m_; ++u) out[u] /= z;
    }

    std::vector<double> probs(std::size_t x) const {
        std::vector<double> p(m_);
        probs(x, p);
        return p;
    }

    double log_prob(std::size_t x, std::size_t u) const {
        const double* l = logits_.data() + x * m_;
        const double mx = *std::max_element(l, l + m_);
        double z = 0.0;
        for (std::size_t a = 0; a < m_; ++a) z += std::exp(l[a] - mx);
        return l[u] - mx - std::log(z);
    }

    std::size_t sample(std::size_t x, Rng& rng) const {
        thread_local std::vector<double> p;
        p.resize(m_);
        probs(x, p);
        return sample_categorical(p, rng);
    }

    /// Projection onto the L-infinity ball of the given radius.
    void project(double radius) {
        for (auto& v : logits_) v = std::clamp(v, -radius, radius);
    }

    StochasticPolicy to_stochastic() const {
        std::vector<double> p(n_ * m_);
        for (std::size_t x = 0; x < n_; ++x) probs(x, std::span<double>(p).subspan(x * m_, m_));
        return {n_, m_, std::move(p)};
    }

    nlohmann::json to_json() const {
        return {{"kind", "softmax"}, {"n_states", n_}, {"n_actions", m_}, {"logits", logits_}};
    }

    static SoftmaxPolicy from_json(const nlohmann::json& j) {
        SoftmaxPolicy p(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>());
        p.logits_ = j.at("logits").get<std::vector<double>>();
        if (p.logits_.size() != p.n_ * p.m_) throw std::invalid_argument("logits have wrong size");
        return p;
    }

    friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<double> logits_;
};

/// V(x) = phi(x) . w; one-hot features unless a feature matrix is given.
class LinearCritic {
public:
    LinearCritic() = default;
    explicit LinearCritic(std::size_t n_states) : weights_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_states))) {}
    explicit LinearCritic(Eigen::MatrixXd features)
        : features_(std::move(features)), weights_(Eigen::VectorXd::Zero(features_->cols())) {}

    double value(std::size_t x) const {
        if (!features_) return weights_(static_cast<Eigen::Index>(x));
        return features_->row(static_cast<Eigen::Index>(x)).dot(weights_);
    }

    void td_step(std::size_t x, double target, double beta) {
        const double delta = target - value(x);
        if (!features_)
            weights_(static_cast<Eigen::Index>(x)) += beta * delta;
        else
            weights_ += beta * delta * features_->row(static_cast<Eigen::Index>(x)).transpose();
    }

    Eigen::VectorXd& weights() { return weights_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    bool one_hot() const { return !features_; }

private:
    std::optional<Eigen::MatrixXd> features_;
    Eigen::VectorXd weights_;
};

struct TrajectoryStep {
    std::size_t x = 0;
    std::size_t u = 0;
    std::size_t y = 0;
    double reward = 0.0;
    bool terminal = false;
    bool truncated = false;
    /// State the stream was reset to after a truncated step.
    std::optional<std::size_t> restart;
    double s_phi = 0.0;
    /// log pi_b(u|x) of the behaviour policy; NaN when not recorded.
    double behavior_logprob = std::numeric_limits<double>::quiet_NaN();

    std::size_t next() const { return restart.value_or(y); }
};

struct EpisodeStats {
    double ret = 0.0;
    std::size_t length = 0;
    bool success = false;
    bool failure = false;
    bool switched = false;
};

struct TrajectoryBuffer {
    std::vector<TrajectoryStep> steps;
    std::vector<EpisodeStats> episodes;

    std::size_t size() const { return steps.size(); }
    bool episode_end(std::size_t t) const { return steps[t].terminal || steps[t].truncated; }
};

/// Carries the running episode across consecutive rollouts.
struct EpisodeTracker {
    EpisodeStats current;
};

template <Environment Env>
TrajectoryBuffer rollout(Env& env, const SoftmaxPolicy& policy, std::size_t T, Rng& rng, EpisodeTracker& tracker) {
    if (T == 0) throw std::invalid_argument("rollout: T must be positive");
    if (policy.n_states() != env.n_states() || policy.n_actions() != env.n_actions())
        throw std::invalid_argument("rollout: policy does not match environment");
    TrajectoryBuffer buf;
    buf.steps.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        TrajectoryStep s;
        s.x = env.state();
        s.u = policy.sample(s.x, rng);
        s.behavior_logprob = policy.log_prob(s.x, s.u);
        const StepResult r = env.step(s.u, rng);
        s.y = r.next_state;
        s.reward = r.reward;
        s.terminal = r.terminal;
        s.truncated = r.truncated && !r.terminal;
        buf.steps.push_back(s);
        auto& ep = tracker.current;
        ep.ret += r.reward;
        ++ep.length;
        ep.switched = ep.switched || r.switched;
        if (r.terminal || r.truncated) {
            ep.success = r.reached_goal;
            ep.failure = r.failed;
            buf.episodes.push_back(ep);
            ep = {};
            if (!r.terminal) buf.steps.back().restart = env.reset(rng);
        }
    }
    return buf;
}

/// Starts every episode from a uniformly drawn state when enabled. Terminal
/// steps still report the environment's own reset state as their successor.
template <Environment Env>
class ExploringStarts {
public:
    ExploringStarts(Env& env, bool enabled) : env_(env), enabled_(enabled) {
        if constexpr (!HasStateReset<Env>)
            if (enabled) throw std::invalid_argument("exploring starts need an environment with reset_to");
    }

    std::size_t n_states() const { return env_.n_states(); }
    std::size_t n_actions() const { return env_.n_actions(); }
    std::size_t state() const { return env_.state(); }

    std::size_t reset(Rng& rng) {
        env_.reset(rng);
        jump(rng);
        return env_.state();
    }

    StepResult step(std::size_t action, Rng& rng) {
        StepResult r = env_.step(action, rng);
        if (r.terminal) jump(rng);
        return r;
    }

private:
    void jump(Rng& rng) {
        if constexpr (HasStateReset<Env>)
            if (enabled_) env_.reset_to(uniform_index(env_.n_states(), rng));
    }

    Env& env_;
    bool enabled_;
};

/// Fresh environment episode, seeded rollout.
template <Environment Env>
TrajectoryBuffer rollout(Env& env, const SoftmaxPolicy& policy, std::size_t T, std::uint64_t seed) {
    auto rng = make_rng(seed);
    env.reset(rng);
    EpisodeTracker tracker;
    return rollout(env, policy, T, rng, tracker);
}

/// A_s = s_phi - h + W(y) - W(x)
inline double entropy_advantage(std::size_t x, std::size_t /*u*/, std::size_t y, double s_phi, double rate_estimate,
                                const LinearCritic& critic) {
    return s_phi - rate_estimate + critic.value(y) - critic.value(x);
}

/// r + gamma V(y) - V(x), no bootstrap on terminal steps.
inline double discounted_advantage(std::size_t x, std::size_t /*u*/, std::size_t y, double reward,
                                   const LinearCritic& critic, double gamma, bool terminal = false) {
    return reward + (terminal ? 0.0 : gamma * critic.value(y)) - critic.value(x);
}

/// One TD(0) pass: W(x) += beta (s_phi - h + W(y) - W(x)).
inline void update_entropy_critic(LinearCritic& critic, const TrajectoryBuffer& buffer, double rate_estimate,
                                  double beta) {
    if (buffer.steps.empty()) throw std::invalid_argument("update_entropy_critic: empty buffer");
    for (const auto& s : buffer.steps) critic.td_step(s.x, s.s_phi - rate_estimate + critic.value(s.next()), beta);
}

inline void update_discounted_critic(LinearCritic& critic, const TrajectoryBuffer& buffer, double gamma, double beta) {
    for (const auto& s : buffer.steps)
        critic.td_step(s.x, s.reward + (s.terminal ? 0.0 : gamma * critic.value(s.y)), beta);
}

/// In-place expected TD(0) sweeps over every state with recorded transitions,
/// using empirical successor frequencies. An action never tried at x is treated
/// as a self-loop with zero surrogate. After each sweep the weights are shifted
/// so that W(reference) = 0. States without recorded transitions keep their
/// value, which stays level with the reference.
template <class SFn>
void sweep_entropy_critic(LinearCritic& critic, const CountModel& successors, const SoftmaxPolicy& policy, SFn&& s_fn,
                          double rate_estimate, double beta, std::size_t sweeps, std::size_t reference) {
    if (!critic.one_hot()) throw std::invalid_argument("sweep_entropy_critic: needs one-hot features");
    const std::size_t n = successors.n_states();
    const std::size_t m = successors.n_actions();
    auto& w = critic.weights();
    std::vector<std::size_t> seen;
    std::vector<double> s_cache(n * m, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        bool any = false;
        for (std::size_t u = 0; u < m; ++u)
            if (successors.visits(x, u) > 0) {
                s_cache[x * m + u] = s_fn(x, u);
                any = true;
            }
        if (any) seen.push_back(x);
    }
    std::vector<double> pi(m);
    for (std::size_t k = 0; k < sweeps; ++k) {
        for (const std::size_t x : seen) {
            double target = 0.0;
            policy.probs(x, pi);
            for (std::size_t u = 0; u < m; ++u) {
                const auto visits = successors.visits(x, u);
                if (visits == 0) {
                    target += pi[u] * (w(static_cast<Eigen::Index>(x)) - rate_estimate);
                    continue;
                }
                double next = 0.0;
                for (const auto& [y, c] : successors.pair_counts(x, u))
                    next += static_cast<double>(c) * w(static_cast<Eigen::Index>(y));
                target += pi[u] * (s_cache[x * m + u] - rate_estimate + next / static_cast<double>(visits));
            }
            critic.td_step(x, target, beta);
        }
        const double shift = w(static_cast<Eigen::Index>(reference));
        for (const std::size_t x : seen) w(static_cast<Eigen::Index>(x)) -= shift;
    }
}

namespace detail {

inline void check_aligned(const SoftmaxPolicy& policy, const TrajectoryBuffer& buffer, std::size_t n_adv) {
    if (n_adv != buffer.steps.size())
        throw std::invalid_argument(detail::concat("advantages have ", n_adv, " entries for ", buffer.steps.size(), " steps"));
    for (const auto& s : buffer.steps)
        if (s.x >= policy.n_states() || s.u >= policy.n_actions())
            throw std::invalid_argument("buffer step outside the policy's state-action space");
}

}  // namespace detail

/// Score-function ascent on sum_t (adv_r - k adv_s) grad log pi(u_t|x_t),
/// followed by projection of the logits.
inline void combined_policy_gradient(SoftmaxPolicy& policy, const TrajectoryBuffer& buffer,
                                     std::span<const double> adv_reward, std::span<const double> adv_entropy, double k,
                                     double alpha, double projection_radius) {
    detail::check_aligned(policy, buffer, adv_reward.size());
    detail::check_aligned(policy, buffer, adv_entropy.size());
    const std::size_t m = policy.n_actions();
    std::vector<double> grad(policy.logits().size(), 0.0);
    std::vector<double> p(m);
    for (std::size_t t = 0; t < buffer.steps.size(); ++t) {
        const auto& s = buffer.steps[t];
        const double w = adv_reward[t] - k * adv_entropy[t];
        if (w == 0.0) continue;
        policy.probs(s.x, p);
        for (std::size_t a = 0; a < m; ++a) grad[s.x * m + a] += w * ((a == s.u ? 1.0 : 0.0) - p[a]);
    }
    auto& th = policy.logits();
    for (std::size_t i = 0; i < th.size(); ++i) th[i] += alpha * grad[i];
    policy.project(projection_radius);
}

/// Gradient of the clipped surrogate sum_t min(rho A, clip(rho) A) at the current logits.
inline std::vector<double> ppo_clip_gradient(const SoftmaxPolicy& policy, const TrajectoryBuffer& buffer,
                                             std::span<const double> advantages, double clip_epsilon) {
    detail::check_aligned(policy, buffer, advantages.size());
    const std::size_t m = policy.n_actions();
    std::vector<double> grad(policy.logits().size(), 0.0);
    std::vector<double> p(m);
    for (std::size_t t = 0; t < buffer.steps.size(); ++t) {
        const auto& s = buffer.steps[t];
        if (std::isnan(s.behavior_logprob))
            throw std::invalid_argument("stale buffer: behaviour log-probabilities missing");
        const double a_t = advantages[t];
        if (a_t == 0.0) continue;
        const double rho = std::exp(policy.log_prob(s.x, s.u) - s.behavior_logprob);
        if ((a_t > 0.0 && rho > 1.0 + clip_epsilon) || (a_t < 0.0 && rho < 1.0 - clip_epsilon)) continue;
        policy.probs(s.x, p);
        for (std::size_t a = 0; a < m; ++a) grad[s.x * m + a] += a_t * rho * ((a == s.u ? 1.0 : 0.0) - p[a]);
    }
    return grad;
}

inline void ppo_clip_update(SoftmaxPolicy& policy, const TrajectoryBuffer& buffer, std::span<const double> advantages,
                            double clip_epsilon, std::size_t n_minibatch_epochs, double alpha,
                            double projection_radius = 50.0) {
    for (std::size_t e = 0; e < n_minibatch_epochs; ++e) {
        const auto grad = ppo_clip_gradient(policy, buffer, advantages, clip_epsilon);
        auto& th = policy.logits();
        for (std::size_t i = 0; i < th.size(); ++i) th[i] += alpha * grad[i];
        policy.project(projection_radius);
    }
}

enum class ModelKind { count, gaussian, exact };
enum class UpdateRule { pg, ppo };

struct TrainerConfig {
    double k = 1.0;
    double gamma = 0.99;
    double actor_rate = 0.1;
    double critic_rate = 0.2;
    double entropy_critic_rate = 0.1;
    double model_rate = 0.1;
    std::size_t T = 256;
    std::size_t epochs = 200;
    double clip_epsilon = 0.2;
    std::size_t ppo_epochs = 4;
    UpdateRule update = UpdateRule::ppo;
    /// Unset means 10% of epochs * T.
    std::optional<std::size_t> entropy_delay_steps;
    /// After the delay, k grows linearly to its full value over this many steps.
    std::size_t entropy_ramp_steps = 0;
    std::uint64_t seed = 0;
    double projection_radius = 50.0;
    SignalMode signal_mode = SignalMode::log;
    ModelKind model = ModelKind::count;
    /// Unset means 0.05 / n_states.
    std::optional<double> model_alpha;
    double variance_floor = 1e-8;
    double rate_ema = 0.9;
    std::size_t pretrain_steps = 0;
    std::size_t model_batches = 4;
    std::size_t model_batch_size = 64;
    std::size_t replay_capacity = 0;
    /// Rates scaled by 1 / (1 + epoch / schedule_scale) when positive.
    double schedule_scale = 0.0;
    /// Exact entropy-rate metrics every this many epochs (and the last); 0 disables.
    std::size_t exact_metrics_every = 1;
    /// Centre and scale the combined advantage over each rollout before the actor step.
    bool normalize_advantages = false;
    /// Expected TD(0) sweeps of the entropy critic over the empirical successor model per epoch.
    /// Skipped when k = 0.
    std::size_t entropy_critic_sweeps = 0;
    double sweep_rate = 1.0;
    /// Training episodes begin at uniformly drawn states.
    bool exploring_starts = false;
    /// Initial value of every state in the discounted critic.
    double value_init = 0.0;

    std::size_t delay_steps() const { return entropy_delay_steps.value_or(epochs * T / 10); }

    void validate() const {
        if (!(k >= 0.0)) throw std::invalid_argument("k must be nonnegative");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
        for (double r : {actor_rate, critic_rate, entropy_critic_rate, model_rate})
            if (!(r > 0.0)) throw std::invalid_argument("learning rates must be positive");
        if (T == 0) throw std::invalid_argument("T must be positive");
        if (!(clip_epsilon > 0.0)) throw std::invalid_argument("clip_epsilon must be positive");
        if (!(projection_radius > 0.0)) throw std::invalid_argument("projection_radius must be positive");
        if (!(rate_ema >= 0.0 && rate_ema < 1.0)) throw std::invalid_argument("rate_ema must be in [0,1)");
        if (model_alpha && !(*model_alpha >= 0.0)) throw std::invalid_argument("model_alpha must be nonnegative");
        if (!(variance_floor > 0.0)) throw std::invalid_argument("variance_floor must be positive");
        if (!(schedule_scale >= 0.0)) throw std::invalid_argument("schedule_scale must be nonnegative");
    }

    /// Trade-off in force once `steps` environment steps have been taken.
    double k_at(std::size_t steps) const {
        const std::size_t d = delay_steps();
        if (steps < d) return 0.0;
        if (entropy_ramp_steps == 0) return k;
        return k * std::min(1.0, static_cast<double>(steps - d + 1) / static_cast<double>(entropy_ramp_steps));
    }

    double schedule(std::size_t epoch) const {
        return schedule_scale > 0.0 ? 1.0 / (1.0 + static_cast<double>(epoch) / schedule_scale) : 1.0;
    }
};

inline nlohmann::json trainer_config_to_json(const TrainerConfig& c) {
    auto kind = c.model == ModelKind::count ? "count" : c.model == ModelKind::gaussian ? "gaussian" : "exact";
    return {{"k", c.k},
            {"gamma", c.gamma},
            {"actor_rate", c.actor_rate},
            {"critic_rate", c.critic_rate},
            {"entropy_critic_rate", c.entropy_critic_rate},
            {"model_rate", c.model_rate},
            {"T", c.T},
            {"epochs", c.epochs},
            {"clip_epsilon", c.clip_epsilon},
            {"ppo_epochs", c.ppo_epochs},
            {"update", c.update == UpdateRule::ppo ? "ppo" : "pg"},
            {"entropy_delay_steps", c.entropy_delay_steps ? nlohmann::json(*c.entropy_delay_steps) : nlohmann::json(nullptr)},
            {"entropy_ramp_steps", c.entropy_ramp_steps},
            {"seed", c.seed},
            {"projection_radius", c.projection_radius},
            {"signal_mode", to_string(c.signal_mode)},
            {"model", kind},
            {"model_alpha", c.model_alpha ? nlohmann::json(*c.model_alpha) : nlohmann::json(nullptr)},
            {"variance_floor", c.variance_floor},
            {"rate_ema", c.rate_ema},
            {"pretrain_steps", c.pretrain_steps},
            {"model_batches", c.model_batches},
            {"model_batch_size", c.model_batch_size},
            {"replay_capacity", c.replay_capacity},
            {"schedule_scale", c.schedule_scale},
            {"exact_metrics_every", c.exact_metrics_every},
            {"normalize_advantages", c.normalize_advantages},
            {"exploring_starts", c.exploring_starts},
            {"entropy_critic_sweeps", c.entropy_critic_sweeps},
            {"sweep_rate", c.sweep_rate},
            {"value_init", c.value_init}};
}

/// Fields missing from `j` keep their defaults; unknown fields are rejected.
inline TrainerConfig trainer_config_from_json(const nlohmann::json& j, TrainerConfig c = {}) {
    if (j.is_null()) return c;
    if (!j.is_object()) throw std::invalid_argument("trainer config must be a JSON object");
    const auto known = trainer_config_to_json(c);
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw std::invalid_argument("unknown trainer field \"" + key + "\"");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("k", c.k);
        get("gamma", c.gamma);
        get("actor_rate", c.actor_rate);
        get("critic_rate", c.critic_rate);
        get("entropy_critic_rate", c.entropy_critic_rate);
        get("model_rate", c.model_rate);
        get("T", c.T);
        get("epochs", c.epochs);
        get("clip_epsilon", c.clip_epsilon);
        get("ppo_epochs", c.ppo_epochs);
        get("seed", c.seed);
        get("projection_radius", c.projection_radius);
        get("variance_floor", c.variance_floor);
        get("rate_ema", c.rate_ema);
        get("pretrain_steps", c.pretrain_steps);
        get("model_batches", c.model_batches);
        get("model_batch_size", c.model_batch_size);
        get("replay_capacity", c.replay_capacity);
        get("schedule_scale", c.schedule_scale);
        get("exact_metrics_every", c.exact_metrics_every);
        get("normalize_advantages", c.normalize_advantages);
        get("value_init", c.value_init);
        get("entropy_ramp_steps", c.entropy_ramp_steps);
        get("exploring_starts", c.exploring_starts);
        get("entropy_critic_sweeps", c.entropy_critic_sweeps);
        get("sweep_rate", c.sweep_rate);
        if (j.contains("update")) {
            const auto u = j.at("update").get<std::string>();
            if (u != "ppo" && u != "pg") throw std::invalid_argument("update must be \"ppo\" or \"pg\"");
            c.update = u == "ppo" ? UpdateRule::ppo : UpdateRule::pg;
        }
        if (j.contains("signal_mode")) c.signal_mode = parse_signal_mode(j.at("signal_mode").get<std::string>());
        if (j.contains("model")) {
            const auto m = j.at("model").get<std::string>();
            if (m == "count") c.model = ModelKind::count;
            else if (m == "gaussian") c.model = ModelKind::gaussian;
            else if (m == "exact") c.model = ModelKind::exact;
            else throw std::invalid_argument("model must be \"count\", \"gaussian\" or \"exact\"");
        }
        if (j.contains("entropy_delay_steps"))
            c.entropy_delay_steps = j.at("entropy_delay_steps").is_null()
                                        ? std::nullopt
                                        : std::optional<std::size_t>(j.at("entropy_delay_steps").get<std::size_t>());
        if (j.contains("model_alpha"))
            c.model_alpha = j.at("model_alpha").is_null() ? std::nullopt
                                                          : std::optional<double>(j.at("model_alpha").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed trainer config: ") + e.what());
    }
    c.validate();
    return c;
}

inline double policy_entropy_mean(const SoftmaxPolicy& policy, const TrajectoryBuffer& buf) {
    if (buf.steps.empty()) return 0.0;
    double h = 0.0;
    std::vector<double> p(policy.n_actions());
    for (const auto& s : buf.steps) {
        policy.probs(s.x, p);
        h += shannon_entropy(p);
    }
    return h / static_cast<double>(buf.steps.size());
}

struct TrainResult {
    SoftmaxPolicy policy;
    std::vector<nlohmann::json> metrics;
    double rate_estimate = 0.0;
    LinearCritic entropy_critic;
    LinearCritic value_critic;
};

namespace detail {

inline nlohmann::json opt(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

/// In-place (w - mean) / std; left centred only when the spread vanishes.
inline void normalize(std::vector<double>& w) {
    if (w.empty()) return;
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double& v : w) {
        v -= mean;
        var += v * v;
    }
    const double sd = std::sqrt(var / static_cast<double>(w.size()));
    if (sd > 1e-12)
        for (double& v : w) v /= sd;
}

}  // namespace detail

/// Rollout, model update, rate refresh, critic updates, then the actor step.
template <Environment Env>
TrainResult train(Env& env, const TrainerConfig& config) {
    config.validate();
    const std::size_t n = env.n_states();
    const std::size_t m = env.n_actions();
    auto rng = make_rng(config.seed);
    ExploringStarts<Env> sim(env, config.exploring_starts);
    const std::size_t reference = sim.reset(rng);

    TrainResult res;
    res.policy = SoftmaxPolicy(n, m);
    res.entropy_critic = LinearCritic(n);
    res.value_critic = LinearCritic(n);
    res.value_critic.weights().setConstant(config.value_init);

    const double alpha = config.model_alpha.value_or(0.05 / static_cast<double>(n));
    CountModel counts(n, m, alpha);
    CountModel successors(n, m, 0.0);
    std::optional<GaussianEntropyModel> gauss;
    ReplayBuffer<VectorTransition> replay(config.replay_capacity);
    std::vector<double> exact_s;

    if (config.model == ModelKind::exact) {
        if constexpr (HasExactMdp<Env>)
            exact_s = surrogate_table(env.exact_mdp());
        else
            throw std::invalid_argument("model \"exact\" needs an environment with an exact MDP");
    }
    if (config.model == ModelKind::gaussian) {
        if constexpr (HasObservation<Env>)
            gauss.emplace(n, m, static_cast<std::size_t>(env.observation(0).size()), config.signal_mode,
                          config.variance_floor);
        else
            throw std::invalid_argument("model \"gaussian\" needs an environment with observations");
    }

    auto observe_model = [&](const TrajectoryStep& s) {
        if (config.entropy_critic_sweeps > 0 && config.k > 0.0) successors.update(s.x, s.u, s.next());
        if (config.model == ModelKind::count) {
            counts.update(s.x, s.u, s.y);
        } else if (config.model == ModelKind::gaussian) {
            if constexpr (HasObservation<Env>) replay.add({s.x, s.u, env.observation(s.y)});
        }
    };
    auto train_gaussian = [&](double rate) {
        if (!gauss || replay.empty()) return;
        for (std::size_t b = 0; b < config.model_batches; ++b) {
            const auto batch = replay.sample(config.model_batch_size, rng);
            gauss->train_mean_predictor(batch, rate);
        }
    };

    EpisodeTracker tracker;
    if (config.pretrain_steps > 0) {
        const SoftmaxPolicy uniform(n, m);
        const auto warm = rollout(sim, uniform, config.pretrain_steps, rng, tracker);
        for (const auto& s : warm.steps) observe_model(s);
        train_gaussian(config.model_rate);
        sim.reset(rng);
        tracker = {};
    }

    std::size_t steps = 0;
    bool have_rate = false;
    double rate = 0.0;
    std::vector<double> adv_r, adv_s, weight;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double sched = config.schedule(epoch);
        auto buf = rollout(sim, res.policy, config.T, rng, tracker);

        for (const auto& s : buf.steps) observe_model(s);
        train_gaussian(config.model_rate * sched);
        for (auto& s : buf.steps) {
            switch (config.model) {
                case ModelKind::count: s.s_phi = counts.surrogate(s.x, s.u); break;
                case ModelKind::exact: s.s_phi = exact_s[s.x * m + s.u]; break;
                case ModelKind::gaussian:
                    if constexpr (HasObservation<Env>) s.s_phi = gauss->observe(s.x, s.u, env.observation(s.y));
                    break;
            }
        }

        double batch_rate = 0.0;
        for (const auto& s : buf.steps) batch_rate += s.s_phi;
        batch_rate /= static_cast<double>(buf.steps.size());
        rate = have_rate ? config.rate_ema * rate + (1.0 - config.rate_ema) * batch_rate : batch_rate;
        have_rate = true;

        update_entropy_critic(res.entropy_critic, buf, rate, config.entropy_critic_rate * sched);
        if (config.entropy_critic_sweeps > 0 && config.k > 0.0) {
            auto s_fn = [&](std::size_t x, std::size_t u) {
                switch (config.model) {
                    case ModelKind::count: return counts.surrogate(x, u);
                    case ModelKind::exact: return exact_s[x * m + u];
                    case ModelKind::gaussian: return gauss->estimate(x, u);
                }
                return 0.0;
            };
            sweep_entropy_critic(res.entropy_critic, successors, res.policy, s_fn, rate, config.sweep_rate,
                                 config.entropy_critic_sweeps, reference);
        }
        update_discounted_critic(res.value_critic, buf, config.gamma, config.critic_rate * sched);

        const std::size_t T = buf.steps.size();
        adv_r.resize(T);
        adv_s.resize(T);
        weight.resize(T);
        const double k_eff = config.k_at(steps);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& s = buf.steps[t];
            adv_r[t] = discounted_advantage(s.x, s.u, s.y, s.reward, res.value_critic, config.gamma, s.terminal);
            adv_s[t] = entropy_advantage(s.x, s.u, s.next(), s.s_phi, rate, res.entropy_critic);
            weight[t] = adv_r[t] - k_eff * adv_s[t];
        }
        if (config.normalize_advantages) detail::normalize(weight);
        const double actor_rate = config.actor_rate * sched;
        if (config.update == UpdateRule::pg) {
            const std::vector<double> zeros(T, 0.0);
            combined_policy_gradient(res.policy, buf, weight, zeros, 0.0, actor_rate, config.projection_radius);
        } else
            ppo_clip_update(res.policy, buf, weight, config.clip_epsilon, config.ppo_epochs, actor_rate,
                            config.projection_radius);
        steps += T;

        std::optional<double> mean_ret, mean_len, exact_rate, tv;
        if (!buf.episodes.empty()) {
            double r = 0.0, l = 0.0;
            for (const auto& e : buf.episodes) {
                r += e.ret;
                l += static_cast<double>(e.length);
            }
            mean_ret = r / static_cast<double>(buf.episodes.size());
            mean_len = l / static_cast<double>(buf.episodes.size());
        }
        if constexpr (HasExactMdp<Env>) {
            const bool due = config.exact_metrics_every > 0 &&
                             ((epoch + 1) % config.exact_metrics_every == 0 || epoch + 1 == config.epochs);
            if (due) {
                exact_rate = entropy_rate_exact(env.exact_mdp(), res.policy.to_stochastic());
                if (config.model == ModelKind::count) tv = model_tv_error(counts, env.exact_mdp());
            }
        }
        res.metrics.push_back({{"epoch", epoch + 1},
                               {"steps", steps},
                               {"mean_return", detail::opt(mean_ret)},
                               {"mean_ep_len", detail::opt(mean_len)},
                               {"empirical_surrogate_rate", batch_rate},
                               {"exact_entropy_rate", detail::opt(exact_rate)},
                               {"model_tv_error", detail::opt(tv)},
                               {"policy_entropy", policy_entropy_mean(res.policy, buf)}});
    }
    res.rate_estimate = rate;
    return res;
}

struct EvalReport {
    std::vector<EpisodeStats> episodes;
    double mean_return = 0.0;
    double std_return = 0.0;
    double mean_length = 0.0;
    double std_length = 0.0;
    double success_rate = 0.0;
    double failure_rate = 0.0;
    double switch_rate = 0.0;
    std::optional<double> empirical_surrogate_rate;
    std::optional<double> exact_entropy_rate;
    std::optional<double> exact_surrogate_rate;
};

/// Runs n_episodes from reset under the stochastic policy. Episodes end on a
/// terminal step, the environment's own limit, or `max_steps`.
template <Environment Env>
EvalReport evaluate(Env& env, const StochasticPolicy& policy, std::size_t n_episodes, std::uint64_t seed,
                    std::size_t max_steps = 1000) {
    if (policy.n_states() != env.n_states() || policy.n_actions() != env.n_actions())
        throw std::invalid_argument(detail::concat("policy is ", policy.n_states(), "x", policy.n_actions(),
                                                   " but environment is ", env.n_states(), "x", env.n_actions()));
    auto rng = make_rng(seed);
    EvalReport rep;
    std::vector<double> s_table;
    if constexpr (HasExactMdp<Env>) s_table = surrogate_table(env.exact_mdp());
    double s_sum = 0.0;
    std::size_t s_count = 0;
    for (std::size_t e = 0; e < n_episodes; ++e) {
        env.reset(rng);
        EpisodeStats ep;
        for (std::size_t t = 0; t < max_steps; ++t) {
            const std::size_t x = env.state();
            const std::size_t u = sample_categorical(policy.row(x), rng);
            if (!s_table.empty()) {
                s_sum += s_table[x * env.n_actions() + u];
                ++s_count;
            }
            const auto r = env.step(u, rng);
            ep.ret += r.reward;
            ++ep.length;
            ep.switched = ep.switched || r.switched;
            if (r.terminal || r.truncated) {
                ep.success = r.reached_goal;
                ep.failure = r.failed;
                break;
            }
        }
        rep.episodes.push_back(ep);
    }
    const double ne = static_cast<double>(std::max<std::size_t>(1, n_episodes));
    for (const auto& ep : rep.episodes) {
        rep.mean_return += ep.ret / ne;
        rep.mean_length += static_cast<double>(ep.length) / ne;
        rep.success_rate += ep.success ? 1.0 / ne : 0.0;
        rep.failure_rate += ep.failure ? 1.0 / ne : 0.0;
        rep.switch_rate += ep.switched ? 1.0 / ne : 0.0;
    }
    for (const auto& ep : rep.episodes) {
        rep.std_return += (ep.ret - rep.mean_return) * (ep.ret - rep.mean_return) / ne;
        rep.std_length += (static_cast<double>(ep.length) - rep.mean_length) *
                          (static_cast<double>(ep.length) - rep.mean_length) / ne;
    }
    rep.std_return = std::sqrt(rep.std_return);
    rep.std_length = std::sqrt(rep.std_length);
    if (s_count > 0) rep.empirical_surrogate_rate = s_sum / static_cast<double>(s_count);
    if constexpr (HasExactMdp<Env>) {
        const auto er = entropy_report(env.exact_mdp(), policy);
        rep.exact_entropy_rate = er.rate;
        rep.exact_surrogate_rate = er.surrogate_rate;
    }
    return rep;
}

}  // namespace parl
