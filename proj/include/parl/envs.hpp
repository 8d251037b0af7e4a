#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "parl/entropy.hpp"
#include "parl/mdp.hpp"
#include "parl/rng.hpp"

namespace parl {

struct StepResult {
    std::size_t next_state = 0;
    double reward = 0.0;
    /// Episode ended; next_state is already the reset state.
    bool terminal = false;
    /// Episode cut by a step limit; the caller resets.
    bool truncated = false;
    bool reached_goal = false;
    bool failed = false;
    /// This step turned the switch on.
    bool switched = false;
};

template <class E>
concept Environment = requires(E& env, const E& cenv, Rng& rng, std::size_t a) {
    { cenv.n_states() } -> std::convertible_to<std::size_t>;
    { cenv.n_actions() } -> std::convertible_to<std::size_t>;
    { env.reset(rng) } -> std::convertible_to<std::size_t>;
    { env.step(a, rng) } -> std::same_as<StepResult>;
    { cenv.state() } -> std::convertible_to<std::size_t>;
};

template <class E>
concept HasStateReset = requires(E& env, std::size_t x) { env.reset_to(x); };

template <class E>
concept HasExactMdp = requires(const E& env) {
    { env.exact_mdp() } -> std::convertible_to<const TabularMdp&>;
};

template <class E>
concept HasObservation = requires(const E& env, std::size_t x) {
    { env.observation(x) } -> std::convertible_to<Eigen::VectorXd>;
};

/// Samples directly from a TabularMdp. Continuing by default; an optional step
/// limit only marks episode boundaries for reporting.
class TabularEnv {
public:
    explicit TabularEnv(TabularMdp mdp, std::size_t max_episode_steps = 0)
        : mdp_(std::move(mdp)), max_steps_(max_episode_steps) {}

    std::size_t n_states() const { return mdp_.n_states(); }
    std::size_t n_actions() const { return mdp_.n_actions(); }
    std::size_t state() const { return state_; }
    const TabularMdp& exact_mdp() const { return mdp_; }

    Eigen::VectorXd observation(std::size_t x) const { return Eigen::VectorXd::Constant(1, static_cast<double>(x)); }

    std::size_t reset(Rng& rng) {
        state_ = sample_categorical(mdp_.mu0(), rng);
        steps_ = 0;
        return state_;
    }

    void reset_to(std::size_t x) {
        if (x >= mdp_.n_states()) throw std::out_of_range("reset_to: state out of range");
        state_ = x;
        steps_ = 0;
    }

    StepResult step(std::size_t action, Rng& rng) {
        const auto row = mdp_.row(state_, action);
        const double v = uniform01(rng);
        double acc = 0.0;
        const Transition* pick = nullptr;
        for (const auto& t : row) {
            if (t.prob <= 0.0) continue;
            pick = &t;
            acc += t.prob;
            if (v < acc) break;
        }
        StepResult r;
        r.next_state = pick->next;
        r.reward = pick->reward;
        state_ = pick->next;
        ++steps_;
        r.truncated = max_steps_ > 0 && steps_ >= max_steps_;
        return r;
    }

private:
    TabularMdp mdp_;
    std::size_t max_steps_;
    std::size_t state_ = 0;
    std::size_t steps_ = 0;
};

/// Rows ~ Dirichlet(alpha), rewards ~ U[0,1], uniform mu0.
inline TabularMdp random_ergodic_mdp(std::size_t n_states, std::size_t n_actions, double dirichlet_alpha,
                                     std::uint64_t seed) {
    if (n_states < 2) throw std::invalid_argument("random_ergodic_mdp: n_states must be at least 2");
    if (n_actions < 1) throw std::invalid_argument("random_ergodic_mdp: n_actions must be at least 1");
    if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("random_ergodic_mdp: alpha must be positive");
    auto rng = make_rng(seed);
    std::vector<std::vector<Transition>> rows(n_states * n_actions);
    for (std::size_t x = 0; x < n_states; ++x)
        for (std::size_t u = 0; u < n_actions; ++u) {
            const auto p = sample_dirichlet(n_states, dirichlet_alpha, rng);
            auto& r = rows[x * n_actions + u];
            for (std::size_t y = 0; y < n_states; ++y) r.push_back({y, p[y], uniform01(rng)});
        }
    // Re-normalise in long double so each row sums to one well inside tolerance.
    for (auto& r : rows) {
        long double total = 0.0L;
        for (const auto& t : r) total += t.prob;
        for (auto& t : r) t.prob = static_cast<double>(t.prob / total);
    }
    return TabularMdp(n_states, n_actions, std::move(rows),
                      std::vector<double>(n_states, 1.0 / static_cast<double>(n_states)));
}

/// a0 moves to state 0, a1 to state 1; reward 1 whenever the state changes.
inline TabularMdp two_state_diagnostic() {
    std::vector<std::vector<std::vector<double>>> p = {{{1, 0}, {0, 1}}, {{1, 0}, {0, 1}}};
    std::vector<std::vector<std::vector<double>>> r = {{{0, 1}, {0, 1}}, {{1, 0}, {1, 0}}};
    return TabularMdp::from_dense(p, r, {0.5, 0.5});
}

/// a0 deterministically swaps the state, a1 lands uniformly on either state.
/// Every policy gives an irreducible chain and a0 everywhere is the unique
/// zero-entropy policy. `noisy_reward` is paid for taking a1.
inline TabularMdp noisy_two_state_diagnostic(double noisy_reward = 0.0) {
    std::vector<std::vector<std::vector<double>>> p = {{{0, 1}, {0.5, 0.5}}, {{1, 0}, {0.5, 0.5}}};
    std::vector<std::vector<std::vector<double>>> r = {{{0, 0}, {noisy_reward, noisy_reward}},
                                                       {{0, 0}, {noisy_reward, noisy_reward}}};
    return TabularMdp::from_dense(p, r, {0.5, 0.5});
}

// ---------------------------------------------------------------------------
// Grid worlds

enum class Cell : char { floor = '.', wall = '#', lava = 'L', goal = 'G', slippery = '~', switch_ = 'S' };

enum GridAction : std::size_t { kForward = 0, kLeft = 1, kRight = 2, kToggle = 3 };
inline constexpr std::size_t kGridActions = 4;

// 0 east, 1 south, 2 west, 3 north; rows grow downwards.
inline constexpr std::array<int, 4> kDx = {1, 0, -1, 0};
inline constexpr std::array<int, 4> kDy = {0, 1, 0, -1};

struct GridPos {
    int col = 0;
    int row = 0;
    friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct GridSpec {
    int width = 0;
    int height = 0;
    std::vector<std::string> layout;
    GridPos start;
    int start_dir = 0;
    double slip_probability = 0.0;
    double goal_reward = 1.0;
    double switched_goal_reward = 0.95;
    double failure_reward = -1.0;
    std::vector<std::vector<GridPos>> obstacle_tracks;
    /// Index into each track where its obstacle starts.
    std::vector<std::size_t> obstacle_starts;
    bool switch_initially_on = false;
    std::size_t max_episode_steps = 100;

    Cell cell(GridPos p) const {
        if (p.col < 0 || p.row < 0 || p.col >= width || p.row >= height) return Cell::wall;
        return static_cast<Cell>(layout[static_cast<std::size_t>(p.row)][static_cast<std::size_t>(p.col)]);
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
        if (layout.size() != static_cast<std::size_t>(height))
            throw std::invalid_argument(detail::concat("layout has ", layout.size(), " rows, expected ", height));
        int goals = 0, switches = 0;
        for (int r = 0; r < height; ++r) {
            const auto& line = layout[static_cast<std::size_t>(r)];
            if (line.size() != static_cast<std::size_t>(width))
                throw std::invalid_argument(detail::concat("layout row ", r, " has ", line.size(), " cells, expected ", width));
            for (int c = 0; c < width; ++c) {
                const char ch = line[static_cast<std::size_t>(c)];
                if (std::string(".#LG~S").find(ch) == std::string::npos)
                    throw std::invalid_argument(detail::concat("unknown cell '", ch, "' at (", c, ",", r, ")"));
                goals += ch == 'G';
                switches += ch == 'S';
            }
        }
        if (goals != 1) throw std::invalid_argument(detail::concat("layout must have exactly one goal, found ", goals));
        if (switches > 1) throw std::invalid_argument("layout may have at most one switch");
        if (cell(start) != Cell::floor) throw std::invalid_argument("start must be on a floor cell");
        if (start_dir < 0 || start_dir > 3) throw std::invalid_argument("start_dir must be in 0..3");
        if (!(slip_probability >= 0.0 && slip_probability <= 1.0))
            throw std::invalid_argument("slip_probability must be in [0,1]");
        if (obstacle_starts.size() != obstacle_tracks.size())
            throw std::invalid_argument("obstacle_starts must have one entry per track");
        if (obstacle_tracks.size() > 8) throw std::invalid_argument("at most 8 obstacles are supported");
        for (std::size_t k = 0; k < obstacle_tracks.size(); ++k) {
            const auto& tr = obstacle_tracks[k];
            if (tr.empty() || tr.size() > 16) throw std::invalid_argument("obstacle tracks need 1..16 cells");
            if (obstacle_starts[k] >= tr.size()) throw std::invalid_argument("obstacle start outside its track");
            for (std::size_t i = 0; i < tr.size(); ++i) {
                const Cell c = cell(tr[i]);
                if (c != Cell::floor && c != Cell::slippery)
                    throw std::invalid_argument(detail::concat("track ", k, " cell ", i, " is not walkable floor"));
                if (tr[i] == start) throw std::invalid_argument("obstacle tracks may not cover the start cell");
                if (i > 0 && std::abs(tr[i].col - tr[i - 1].col) + std::abs(tr[i].row - tr[i - 1].row) != 1)
                    throw std::invalid_argument(detail::concat("track ", k, " is not contiguous at cell ", i));
                for (std::size_t k2 = 0; k2 < k; ++k2)
                    for (const auto& q : obstacle_tracks[k2])
                        if (q == tr[i]) throw std::invalid_argument("obstacle tracks must be disjoint");
            }
        }
        if (width > 255 || height > 255) throw std::invalid_argument("grid too large");
    }
};

inline nlohmann::json grid_spec_to_json(const GridSpec& s) {
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& tr : s.obstacle_tracks) {
        nlohmann::json t = nlohmann::json::array();
        for (const auto& p : tr) t.push_back({p.col, p.row});
        tracks.push_back(t);
    }
    return {{"width", s.width},
            {"height", s.height},
            {"layout", s.layout},
            {"start", {s.start.col, s.start.row}},
            {"start_dir", s.start_dir},
            {"slip_probability", s.slip_probability},
            {"goal_reward", s.goal_reward},
            {"switched_goal_reward", s.switched_goal_reward},
            {"failure_reward", s.failure_reward},
            {"obstacle_tracks", tracks},
            {"obstacle_starts", s.obstacle_starts},
            {"switch_initially_on", s.switch_initially_on},
            {"max_episode_steps", s.max_episode_steps}};
}

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "width", "height", "layout", "start", "start_dir", "slip_probability", "goal_reward", "switched_goal_reward",
        "failure_reward", "obstacle_tracks", "obstacle_starts", "switch_initially_on", "max_episode_steps"};
    if (!j.is_object()) throw std::invalid_argument("grid spec must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("unknown grid spec field \"" + key + "\"");
    GridSpec s;
    try {
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        s.layout = j.at("layout").get<std::vector<std::string>>();
        const auto st = j.at("start").get<std::array<int, 2>>();
        s.start = {st[0], st[1]};
        s.start_dir = j.value("start_dir", 0);
        s.slip_probability = j.value("slip_probability", 0.0);
        s.goal_reward = j.value("goal_reward", 1.0);
        s.switched_goal_reward = j.value("switched_goal_reward", 0.95);
        s.failure_reward = j.value("failure_reward", -1.0);
        if (j.contains("obstacle_tracks"))
            for (const auto& t : j.at("obstacle_tracks")) {
                std::vector<GridPos> track;
                for (const auto& p : t) {
                    const auto v = p.get<std::array<int, 2>>();
                    track.push_back({v[0], v[1]});
                }
                s.obstacle_tracks.push_back(std::move(track));
            }
        s.obstacle_starts = j.value("obstacle_starts", std::vector<std::size_t>(s.obstacle_tracks.size(), 0));
        s.switch_initially_on = j.value("switch_initially_on", false);
        s.max_episode_steps = j.value("max_episode_steps", std::size_t{100});
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed grid spec: ") + e.what());
    }
    s.validate();
    return s;
}

/// Default slippery-navigation layout: a three-wide slippery strip above a lava
/// row leads almost straight to the goal; a dry detour runs along the top.
inline GridSpec default_slippery_spec() {
    GridSpec s;
    s.width = 8;
    s.height = 8;
    s.layout = {"........", ".######.", ".######.", ".######.", "..~~~..G", "##LLL###", "########", "########"};
    s.start = {0, 4};
    s.start_dir = 0;
    s.slip_probability = 0.35;
    s.max_episode_steps = 100;
    return s;
}

/// Default switch layout: the agent starts facing the switch just below it and
/// the goal is in the far corner of the same column. Two obstacles patrol
/// vertical tracks to the east.
inline GridSpec default_switch_spec() {
    GridSpec s;
    s.width = 6;
    s.height = 6;
    s.layout = {"G.....", "......", "......", "......", "......", "S....."};
    s.start = {0, 4};
    s.start_dir = 1;
    s.slip_probability = 0.0;
    s.obstacle_tracks = {{{2, 0}, {2, 1}, {2, 2}, {2, 3}}, {{4, 2}, {4, 3}, {4, 4}, {4, 5}}};
    s.obstacle_starts = {0, 3};
    s.max_episode_steps = 100;
    return s;
}

namespace detail {

inline nlohmann::json merged(nlohmann::json base, const nlohmann::json& overrides) {
    if (overrides.is_null()) return base;
    if (!overrides.is_object()) throw std::invalid_argument("grid overrides must be a JSON object");
    for (const auto& [key, value] : overrides.items()) base[key] = value;
    return base;
}

}  // namespace detail

/// Raw grid state. Obstacle positions are indices into their tracks.
struct GridState {
    GridPos pos;
    int dir = 0;
    bool switch_on = false;
    std::array<std::uint8_t, 8> obstacle{};

    friend bool operator==(const GridState&, const GridState&) = default;
};

/// Mini-grid style simulator with an exported tabular MDP over the states
/// reachable from the start. Terminal steps lead straight back to the start
/// state so the exported chain is continuing; the step limit lives only in
/// the simulator.
class GridWorld {
public:
    explicit GridWorld(GridSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        build();
    }

    const GridSpec& spec() const { return spec_; }
    std::size_t n_states() const { return states_.size(); }
    std::size_t n_actions() const { return kGridActions; }
    std::size_t state() const { return encode(current_); }
    const TabularMdp& exact_mdp() const { return mdp_; }

    GridState start_state() const {
        GridState s;
        s.pos = spec_.start;
        s.dir = spec_.start_dir;
        s.switch_on = spec_.switch_initially_on;
        for (std::size_t k = 0; k < spec_.obstacle_tracks.size(); ++k)
            s.obstacle[k] = static_cast<std::uint8_t>(spec_.obstacle_starts[k]);
        return s;
    }

    std::size_t encode(const GridState& s) const {
        auto it = index_.find(key(s));
        if (it == index_.end()) throw std::out_of_range("grid state not reachable from start");
        return it->second;
    }

    const GridState& decode(std::size_t index) const { return states_.at(index); }

    bool on_slippery(std::size_t index) const { return spec_.cell(decode(index).pos) == Cell::slippery; }

    /// position, orientation, obstacle coordinates and switch flag.
    Eigen::VectorXd observation(std::size_t index) const {
        const auto& s = decode(index);
        const auto n_obs = spec_.obstacle_tracks.size();
        Eigen::VectorXd o(static_cast<Eigen::Index>(4 + 2 * n_obs));
        o << s.pos.col, s.pos.row, s.dir, s.switch_on ? 1.0 : 0.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * n_obs));
        for (std::size_t k = 0; k < n_obs; ++k) {
            const auto p = spec_.obstacle_tracks[k][s.obstacle[k]];
            o(static_cast<Eigen::Index>(4 + 2 * k)) = p.col;
            o(static_cast<Eigen::Index>(5 + 2 * k)) = p.row;
        }
        return o;
    }

    std::size_t reset(Rng&) {
        current_ = start_state();
        steps_ = 0;
        return encode(current_);
    }

    void reset_to(std::size_t index) {
        current_ = decode(index);
        steps_ = 0;
    }

    StepResult step(std::size_t action, Rng& rng) {
        if (action >= kGridActions) throw std::out_of_range("grid action out of range");
        GridState s = current_;
        StepResult r;
        const bool slipped = spec_.cell(s.pos) == Cell::slippery && uniform01(rng) < spec_.slip_probability;
        if (slipped) {
            s.dir = static_cast<int>(uniform_index(4, rng));
        } else {
            const auto outcome = apply_action(s, action);
            s = outcome.state;
            r.switched = outcome.switched;
            if (outcome.end != End::none) return finish(r, outcome.end);
        }
        if (!s.switch_on) {
            for (std::size_t k = 0; k < spec_.obstacle_tracks.size(); ++k) {
                const auto moves = obstacle_moves(s.obstacle[k], k);
                s.obstacle[k] = moves[uniform_index(moves.size(), rng)];
            }
            if (agent_hit(s)) return finish(r, End::failure);
        }
        current_ = s;
        ++steps_;
        r.next_state = encode(s);
        r.truncated = spec_.max_episode_steps > 0 && steps_ >= spec_.max_episode_steps;
        return r;
    }

    struct Outcome {
        double prob = 0.0;
        GridState next;
        double reward = 0.0;
    };

    /// Exact successor distribution of (state, action); terminal outcomes map to the start state.
    std::vector<Outcome> transition_outcomes(const GridState& s, std::size_t action) const {
        std::vector<Outcome> out;
        const bool slippery = spec_.cell(s.pos) == Cell::slippery;
        const double p_slip = slippery ? spec_.slip_probability : 0.0;
        auto push_moving = [&](const GridState& base, double prob) {
            if (prob <= 0.0) return;
            if (base.switch_on || spec_.obstacle_tracks.empty()) {
                out.push_back({prob, base, 0.0});
                return;
            }
            std::vector<std::pair<double, GridState>> frontier{{prob, base}};
            for (std::size_t k = 0; k < spec_.obstacle_tracks.size(); ++k) {
                std::vector<std::pair<double, GridState>> next;
                for (const auto& [p, st] : frontier) {
                    const auto moves = obstacle_moves(st.obstacle[k], k);
                    for (auto m : moves) {
                        GridState n = st;
                        n.obstacle[k] = m;
                        next.push_back({p / static_cast<double>(moves.size()), n});
                    }
                }
                frontier = std::move(next);
            }
            for (const auto& [p, st] : frontier) {
                if (agent_hit(st))
                    out.push_back({p, start_state(), spec_.failure_reward});
                else
                    out.push_back({p, st, 0.0});
            }
        };
        for (int d = 0; d < 4 && p_slip > 0.0; ++d) {
            GridState n = s;
            n.dir = d;
            push_moving(n, p_slip / 4.0);
        }
        if (p_slip < 1.0) {
            const auto o = apply_action(s, action);
            const double p = 1.0 - p_slip;
            if (o.end == End::goal)
                out.push_back({p, start_state(), s.switch_on ? spec_.switched_goal_reward : spec_.goal_reward});
            else if (o.end == End::failure)
                out.push_back({p, start_state(), spec_.failure_reward});
            else
                push_moving(o.state, p);
        }
        return out;
    }

private:
    enum class End { none, goal, failure };

    struct ActionOutcome {
        GridState state;
        End end = End::none;
        bool switched = false;
    };

    static std::uint64_t key(const GridState& s) {
        std::uint64_t k = static_cast<std::uint64_t>(s.pos.col) | (static_cast<std::uint64_t>(s.pos.row) << 8) |
                          (static_cast<std::uint64_t>(s.dir) << 16) | (static_cast<std::uint64_t>(s.switch_on) << 18);
        for (std::size_t i = 0; i < 8; ++i) k |= static_cast<std::uint64_t>(s.obstacle[i] & 0xF) << (20 + 4 * i);
        return k;
    }

    GridPos front(const GridState& s) const { return {s.pos.col + kDx[s.dir], s.pos.row + kDy[s.dir]}; }

    bool obstacle_at(const GridState& s, GridPos p) const {
        for (std::size_t k = 0; k < spec_.obstacle_tracks.size(); ++k)
            if (spec_.obstacle_tracks[k][s.obstacle[k]] == p) return true;
        return false;
    }

    bool agent_hit(const GridState& s) const { return obstacle_at(s, s.pos); }

    /// Stay or step to a neighbouring track cell, uniformly.
    std::vector<std::uint8_t> obstacle_moves(std::uint8_t at, std::size_t k) const {
        std::vector<std::uint8_t> m;
        if (at > 0) m.push_back(static_cast<std::uint8_t>(at - 1));
        m.push_back(at);
        if (at + 1u < spec_.obstacle_tracks[k].size()) m.push_back(static_cast<std::uint8_t>(at + 1));
        return m;
    }

    ActionOutcome apply_action(GridState s, std::size_t action) const {
        ActionOutcome o;
        switch (action) {
            case kForward: {
                const GridPos f = front(s);
                const Cell c = spec_.cell(f);
                if (c == Cell::wall || c == Cell::switch_) break;
                if (c == Cell::lava || obstacle_at(s, f)) {
                    o.end = End::failure;
                    break;
                }
                s.pos = f;
                if (c == Cell::goal) o.end = End::goal;
                break;
            }
            case kLeft: s.dir = (s.dir + 3) % 4; break;
            case kRight: s.dir = (s.dir + 1) % 4; break;
            case kToggle:
                if (spec_.cell(front(s)) == Cell::switch_ && !s.switch_on) {
                    s.switch_on = true;
                    o.switched = true;
                }
                break;
            default: break;
        }
        o.state = s;
        return o;
    }

    StepResult finish(StepResult r, End end) {
        r.terminal = true;
        if (end == End::goal) {
            r.reached_goal = true;
            r.reward = current_.switch_on || r.switched ? spec_.switched_goal_reward : spec_.goal_reward;
        } else {
            r.failed = true;
            r.reward = spec_.failure_reward;
        }
        current_ = start_state();
        steps_ = 0;
        r.next_state = encode(current_);
        return r;
    }

    void build() {
        states_.clear();
        index_.clear();
        auto add = [&](const GridState& s) {
            auto [it, inserted] = index_.emplace(key(s), states_.size());
            if (inserted) states_.push_back(s);
            return it->second;
        };
        add(start_state());
        std::vector<std::vector<Transition>> rows;
        for (std::size_t i = 0; i < states_.size(); ++i) {
            const GridState s = states_[i];
            for (std::size_t a = 0; a < kGridActions; ++a) {
                std::vector<Transition> row;
                for (const auto& o : transition_outcomes(s, a)) {
                    const auto j = add(o.next);
                    auto it = std::find_if(row.begin(), row.end(), [j](const Transition& t) { return t.next == j; });
                    if (it == row.end()) {
                        row.push_back({j, o.prob, o.reward});
                    } else {
                        // Merged outcomes share a successor; keep the expected reward.
                        const double p = it->prob + o.prob;
                        it->reward = (it->prob * it->reward + o.prob * o.reward) / p;
                        it->prob = p;
                    }
                }
                rows.push_back(std::move(row));
            }
        }
        std::vector<double> mu0(states_.size(), 0.0);
        mu0[0] = 1.0;
        for (auto& row : rows) {
            long double total = 0.0L;
            for (const auto& t : row) total += t.prob;
            for (auto& t : row) t.prob = static_cast<double>(t.prob / total);
        }
        mdp_ = TabularMdp(states_.size(), kGridActions, std::move(rows), std::move(mu0));
        current_ = start_state();
    }

    GridSpec spec_;
    std::vector<GridState> states_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    TabularMdp mdp_;
    GridState current_;
    std::size_t steps_ = 0;
};

inline GridWorld slippery_grid(const nlohmann::json& overrides = nullptr) {
    return GridWorld(grid_spec_from_json(detail::merged(grid_spec_to_json(default_slippery_spec()), overrides)));
}

inline GridWorld switch_obstacle_grid(const nlohmann::json& overrides = nullptr) {
    return GridWorld(grid_spec_from_json(detail::merged(grid_spec_to_json(default_switch_spec()), overrides)));
}

/// Stationary mass on slippery cells under a policy.
inline double slippery_mass(const GridWorld& env, const StochasticPolicy& policy) {
    const auto mu = stationary_distribution(compose(env.exact_mdp(), policy));
    double m = 0.0;
    for (std::size_t x = 0; x < env.n_states(); ++x)
        if (env.on_slippery(x)) m += mu[x];
    return m;
}

}  // namespace parl
