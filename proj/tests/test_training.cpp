#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "parl/envs.hpp"
#include "parl/suites.hpp"
#include "parl/training.hpp"

using namespace parl;
using Catch::Matchers::WithinAbs;

namespace {

TrajectoryBuffer single_step(std::size_t x, std::size_t u, const SoftmaxPolicy& pi) {
    TrajectoryBuffer buf;
    TrajectoryStep s;
    s.x = x;
    s.u = u;
    s.behavior_logprob = pi.log_prob(x, u);
    buf.steps.push_back(s);
    return buf;
}

/// Rows with probabilities in quarters so that a count model can hold them exactly.
TabularMdp quarter_mdp() {
    return TabularMdp::from_dense({{{0.5, 0.25, 0.25}, {0.25, 0.75, 0.0}},
                                   {{0.0, 0.5, 0.5}, {1.0, 0.0, 0.0}},
                                   {{0.25, 0.25, 0.5}, {0.0, 0.25, 0.75}}},
                                  {}, {1.0, 0.0, 0.0});
}

TrainerConfig noisy_config(std::uint64_t seed) {
    TrainerConfig c;
    c.k = 1.0;
    c.T = 64;
    c.epochs = 200;
    c.gamma = 0.9;
    c.actor_rate = 0.1;
    c.entropy_delay_steps = 0;
    c.exact_metrics_every = 50;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("advantage examples", "[advantage]") {
    LinearCritic w(3);
    w.weights() << 0.3, 1.0, -2.0;
    CHECK_THAT(entropy_advantage(0, 0, 1, 0.5, 0.2, w), WithinAbs(1.0, 1e-15));
    CHECK_THAT(entropy_advantage(2, 1, 2, 0.4, 0.4, w), WithinAbs(0.0, 1e-15));

    LinearCritic v(2);
    v.weights() << 1.0, 2.0;
    CHECK_THAT(discounted_advantage(0, 0, 1, 1.0, v, 0.9), WithinAbs(1.8, 1e-15));
    CHECK_THAT(discounted_advantage(0, 0, 1, 1.0, v, 0.9, true), WithinAbs(0.0, 1e-15));
}

TEST_CASE("linear critic with explicit features", "[advantage]") {
    Eigen::MatrixXd phi(2, 2);
    phi << 1.0, 0.0, 1.0, 1.0;
    LinearCritic c(phi);
    CHECK_FALSE(c.one_hot());
    c.td_step(1, 2.0, 0.5);
    CHECK_THAT(c.value(0), WithinAbs(1.0, 1e-15));
    CHECK_THAT(c.value(1), WithinAbs(2.0, 1e-15));
}

TEST_CASE("entropy critic TD pass uses the stream successor", "[critic]") {
    LinearCritic w(3);
    TrajectoryBuffer buf;
    TrajectoryStep a;
    a.x = 0;
    a.y = 1;
    a.s_phi = 1.0;
    TrajectoryStep b;
    b.x = 1;
    b.y = 2;
    b.truncated = true;
    b.restart = 0;
    b.s_phi = 0.0;
    buf.steps = {a, b};
    w.weights() << 0.0, 0.0, 10.0;
    update_entropy_critic(w, buf, 0.5, 1.0);
    CHECK_THAT(w.value(0), WithinAbs(0.5, 1e-15));
    CHECK_THAT(w.value(1), WithinAbs(0.0, 1e-15));
    CHECK(b.next() == 0);
    CHECK(a.next() == 1);
    CHECK_THROWS_AS(update_entropy_critic(w, TrajectoryBuffer{}, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("sampled entropy critic converges to the bias", "[critic]") {
    auto rng = make_rng(8);
    for (int trial = 0; trial < 3; ++trial) {
        const auto mdp = random_ergodic_mdp(4, 2, 1.0, rng());
        const auto pi = sample_dirichlet_policy(4, 2, rng);
        const auto t = run_critic_trial(mdp, pi, 100'000, rng());
        CHECK(t.sup_error < 0.05);
    }
}

TEST_CASE("expected TD sweeps reach the differential values", "[critic]") {
    const auto mdp = quarter_mdp();
    CountModel counts(3, 2, 0.0);
    for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t u = 0; u < 2; ++u)
            for (const auto& t : mdp.row(x, u)) counts.update(x, u, t.next, static_cast<std::uint64_t>(4 * t.prob));

    SoftmaxPolicy pi(3, 2);
    pi.logits() = {0.3, -0.2, 1.0, 0.0, -0.5, 0.5};
    const auto s = surrogate_table(mdp);
    const auto sp = pi.to_stochastic();
    std::vector<double> r(3, 0.0);
    for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t u = 0; u < 2; ++u) r[x] += sp(x, u) * s[x * 2 + u];
    const auto gb = gain_and_bias(compose(mdp, sp), r);

    LinearCritic w(3);
    sweep_entropy_critic(w, counts, pi, [&](std::size_t x, std::size_t u) { return s[x * 2 + u]; }, gb.gain, 1.0, 500, 0);
    CHECK(w.value(0) == 0.0);
    for (std::size_t x = 0; x < 3; ++x) CHECK_THAT(w.value(x), WithinAbs(gb.bias[x] - gb.bias[0], 1e-9));
}

TEST_CASE("sweeps leave unvisited states alone", "[critic]") {
    CountModel counts(3, 1, 0.0);
    counts.update(0, 0, 1);
    counts.update(1, 0, 0);
    SoftmaxPolicy pi(3, 1);
    LinearCritic w(3);
    w.weights() << 0.0, 0.0, 7.0;
    sweep_entropy_critic(w, counts, pi, [](std::size_t x, std::size_t) { return x == 0 ? 1.0 : 0.0; }, 0.5, 1.0, 50, 0);
    CHECK(w.value(2) == 7.0);
    CHECK_THAT(w.value(1), WithinAbs(-0.5, 1e-9));
    LinearCritic featured(Eigen::MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(sweep_entropy_critic(featured, counts, pi,
                                         [](std::size_t, std::size_t) { return 0.0; }, 0.0, 1.0, 1, 0),
                    std::invalid_argument);
}

TEST_CASE("combined gradient step and projection", "[actor]") {
    SoftmaxPolicy pi(1, 2);
    const auto buf = single_step(0, 0, pi);
    const std::vector<double> ar = {1.0}, as = {0.5};
    combined_policy_gradient(pi, buf, ar, as, 1.0, 1.0, 50.0);
    CHECK_THAT(pi.logit(0, 0), WithinAbs(0.25, 1e-15));
    CHECK_THAT(pi.logit(0, 1), WithinAbs(-0.25, 1e-15));

    SoftmaxPolicy clipped(1, 2);
    combined_policy_gradient(clipped, buf, ar, as, 1.0, 1.0, 0.1);
    CHECK(clipped.logit(0, 0) == 0.1);
    CHECK(clipped.logit(0, 1) == -0.1);

    // k = 0 ignores the entropy advantage entirely.
    SoftmaxPolicy plain(1, 2);
    combined_policy_gradient(plain, buf, ar, std::vector<double>{100.0}, 0.0, 1.0, 50.0);
    CHECK_THAT(plain.logit(0, 0), WithinAbs(0.5, 1e-15));

    CHECK_THROWS_AS(combined_policy_gradient(pi, buf, std::vector<double>{}, as, 1.0, 1.0, 50.0),
                    std::invalid_argument);
}

TEST_CASE("clipped update matches the plain gradient at the behaviour policy", "[actor]") {
    SoftmaxPolicy pi(2, 3);
    pi.logits() = {0.1, 0.2, -0.3, 0.0, 1.0, -1.0};
    TrajectoryBuffer buf = single_step(0, 2, pi);
    buf.steps.push_back(single_step(1, 1, pi).steps[0]);
    const std::vector<double> adv = {0.7, -1.2};

    auto pg = pi;
    combined_policy_gradient(pg, buf, adv, std::vector<double>{0.0, 0.0}, 0.0, 0.05, 50.0);
    auto ppo = pi;
    ppo_clip_update(ppo, buf, adv, 0.2, 1, 0.05);
    for (std::size_t i = 0; i < 6; ++i) CHECK_THAT(ppo.logits()[i], WithinAbs(pg.logits()[i], 1e-15));
}

TEST_CASE("clipping stops the push once the ratio leaves the band", "[actor]") {
    SoftmaxPolicy pi(1, 2);
    const auto buf = single_step(0, 0, pi);
    pi.logit(0, 0) = 1.0;
    CHECK(std::exp(pi.log_prob(0, 0) - buf.steps[0].behavior_logprob) > 1.2);
    const auto g_pos = ppo_clip_gradient(pi, buf, std::vector<double>{1.0}, 0.2);
    CHECK(g_pos[0] == 0.0);
    const auto g_neg = ppo_clip_gradient(pi, buf, std::vector<double>{-1.0}, 0.2);
    CHECK(g_neg[0] < 0.0);

    auto stale = buf;
    stale.steps[0].behavior_logprob = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ppo_clip_gradient(pi, stale, std::vector<double>{1.0}, 0.2), std::invalid_argument);
}

TEST_CASE("softmax policy basics", "[actor]") {
    SoftmaxPolicy pi(2, 3);
    pi.logit(1, 2) = std::log(2.0);
    const auto p = pi.probs(1);
    CHECK_THAT(p[2], WithinAbs(0.5, 1e-15));
    CHECK_THAT(pi.log_prob(1, 0), WithinAbs(std::log(0.25), 1e-15));
    CHECK(SoftmaxPolicy::from_json(pi.to_json()) == pi);
    CHECK_THROWS_AS(pi.probs(2), std::out_of_range);
}

TEST_CASE("rollouts mark truncation and record the restart", "[rollout]") {
    TabularEnv env(noisy_two_state_diagnostic(), 3);
    const auto buf = rollout(env, SoftmaxPolicy(2, 2), 7, 5);
    REQUIRE(buf.size() == 7);
    CHECK(buf.episodes.size() == 2);
    for (std::size_t t = 0; t < 7; ++t) {
        CHECK(buf.episode_end(t) == (t == 2 || t == 5));
        CHECK(buf.steps[t].restart.has_value() == (t == 2 || t == 5));
        if (t + 1 < 7) CHECK(buf.steps[t + 1].x == buf.steps[t].next());
    }
    CHECK_THROWS_AS(rollout(env, SoftmaxPolicy(3, 2), 5, 0), std::invalid_argument);
}

TEST_CASE("terminal steps keep their reset successor", "[rollout]") {
    auto env = switch_obstacle_grid();
    SoftmaxPolicy pi(env.n_states(), 4);
    const auto buf = rollout(env, pi, 2000, 3);
    bool saw_terminal = false;
    for (const auto& s : buf.steps)
        if (s.terminal) {
            saw_terminal = true;
            CHECK(s.y == 0);
            CHECK_FALSE(s.restart);
        }
    CHECK(saw_terminal);
}

TEST_CASE("entropy trade-off schedule", "[config]") {
    TrainerConfig c;
    c.k = 2.0;
    c.T = 10;
    c.epochs = 100;
    CHECK(c.delay_steps() == 100);
    CHECK(c.k_at(99) == 0.0);
    CHECK(c.k_at(100) == 2.0);
    c.entropy_ramp_steps = 10;
    CHECK_THAT(c.k_at(100), WithinAbs(0.2, 1e-15));
    CHECK(c.k_at(109) == 2.0);
    CHECK(c.k_at(10'000) == 2.0);
    c.schedule_scale = 10.0;
    CHECK_THAT(c.schedule(10), WithinAbs(0.5, 1e-15));
}

TEST_CASE("trainer config json", "[config]") {
    TrainerConfig c;
    c.model_alpha = 0.0;
    c.entropy_delay_steps = 5;
    c.update = UpdateRule::pg;
    c.model = ModelKind::exact;
    const auto j = trainer_config_to_json(c);
    CHECK(trainer_config_to_json(trainer_config_from_json(j)) == j);

    CHECK_THROWS_AS(trainer_config_from_json({{"lr", 0.1}}), std::invalid_argument);
    CHECK_THROWS_AS(trainer_config_from_json({{"gamma", 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(trainer_config_from_json({{"update", "sgd"}}), std::invalid_argument);
    CHECK_THROWS_AS(trainer_config_from_json({{"T", "many"}}), std::invalid_argument);
    CHECK_THROWS_AS(trainer_config_from_json({{"k", -1.0}}), std::invalid_argument);
}

TEST_CASE("training is reproducible", "[train]") {
    auto c = noisy_config(3);
    c.epochs = 30;
    TabularEnv e1(noisy_two_state_diagnostic(), 50), e2(noisy_two_state_diagnostic(), 50);
    const auto a = train(e1, c);
    const auto b = train(e2, c);
    CHECK(a.policy == b.policy);
    REQUIRE(a.metrics.size() == 30);
    CHECK(nlohmann::json(a.metrics).dump() == nlohmann::json(b.metrics).dump());
    c.seed = 4;
    TabularEnv e3(noisy_two_state_diagnostic(), 50);
    CHECK_FALSE(train(e3, c).policy == a.policy);
}

TEST_CASE("entropy penalty alone picks the quiet action", "[train]") {
    TabularEnv env(noisy_two_state_diagnostic());
    const auto res = train(env, noisy_config(0));
    for (std::size_t x = 0; x < 2; ++x) CHECK(res.policy.probs(x)[0] > 0.9);
    CHECK(res.metrics.back().at("exact_entropy_rate").get<double>() < 0.1);
    CHECK(res.rate_estimate < 0.1);
}

TEST_CASE("without the penalty the policy stays put on a reward-free MDP", "[train]") {
    auto c = noisy_config(0);
    c.k = 0.0;
    c.critic_rate = 0.2;
    TabularEnv env(noisy_two_state_diagnostic());
    const auto res = train(env, c);
    for (std::size_t x = 0; x < 2; ++x) CHECK_THAT(res.policy.probs(x)[0], WithinAbs(0.5, 1e-12));
}

TEST_CASE("all model kinds train on the grid", "[train]") {
    for (const char* kind : {"count", "exact", "gaussian"}) {
        auto env = switch_obstacle_grid();
        auto c = trainer_config_from_json({{"model", kind}, {"T", 64}, {"epochs", 3}, {"exact_metrics_every", 3}});
        const auto res = train(env, c);
        CHECK(res.metrics.size() == 3);
        CHECK(res.metrics.back().at("exact_entropy_rate").is_number());
    }
}

TEST_CASE("evaluation statistics", "[eval]") {
    TabularEnv env(two_state_diagnostic(), 10);
    const auto rep = evaluate(env, DeterministicPolicy({1, 0}, 2).to_stochastic(), 5, 0);
    CHECK(rep.episodes.size() == 5);
    CHECK(rep.std_return == 0.0);
    CHECK(rep.std_length == 0.0);
    CHECK(rep.mean_length == 10.0);
    CHECK(rep.exact_entropy_rate.value() == 0.0);

    const auto uni = evaluate(env, StochasticPolicy::uniform(2, 2), 20, 1);
    CHECK_THAT(uni.exact_entropy_rate.value(), WithinAbs(std::log(2.0), 1e-12));
    CHECK(uni.empirical_surrogate_rate.value() == 0.0);
    CHECK_THROWS_AS(evaluate(env, StochasticPolicy::uniform(3, 2), 1, 0), std::invalid_argument);
}

TEST_CASE("evaluation on the grid counts goals and switches", "[eval]") {
    auto env = switch_obstacle_grid();
    // Toggle at the start, then walk north to the goal.
    std::vector<std::size_t> actions(env.n_states(), kForward);
    for (std::size_t x = 0; x < env.n_states(); ++x) {
        const auto& s = env.decode(x);
        if (!s.switch_on) actions[x] = s.dir == 1 ? kToggle : kRight;
        else if (s.dir != 3) actions[x] = kLeft;
    }
    const auto rep = evaluate(env, DeterministicPolicy(actions, 4).to_stochastic(), 10, 2);
    CHECK_THAT(rep.success_rate, WithinAbs(1.0, 1e-12));
    CHECK_THAT(rep.switch_rate, WithinAbs(1.0, 1e-12));
    CHECK_THAT(rep.mean_return, WithinAbs(0.95, 1e-12));
    CHECK_THAT(rep.mean_length, WithinAbs(7.0, 1e-12));
}
