#include <catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "parl/entropy.hpp"
#include "parl/envs.hpp"
#include "parl/oracles.hpp"

using namespace parl;
using Catch::Matchers::WithinAbs;

namespace {

const double kLn2 = std::log(2.0);

/// (x,u) pairs visited by a rollout of the composed process.
std::vector<std::pair<std::size_t, std::size_t>> rollout_pairs(const TabularMdp& mdp, const StochasticPolicy& pi,
                                                               std::size_t steps, std::uint64_t seed,
                                                               std::vector<std::size_t>* states = nullptr) {
    auto rng = make_rng(seed);
    TabularEnv env(mdp);
    std::size_t x = env.reset(rng);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(steps);
    if (states) states->assign(1, x);
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t u = sample_categorical(pi.row(x), rng);
        out.emplace_back(x, u);
        x = env.step(u, rng).next_state;
        if (states) states->push_back(x);
    }
    return out;
}

/// Row mixed towards a random distribution so that its TV distance to the original is at most eps.
TabularMdp perturb(const TabularMdp& mdp, double eps, Rng& rng) {
    const std::size_t n = mdp.n_states(), m = mdp.n_actions();
    std::vector<std::vector<std::vector<double>>> p(n, std::vector<std::vector<double>>(m));
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t u = 0; u < m; ++u) {
            const auto q = sample_dirichlet(n, 1.0, rng);
            p[x][u].resize(n);
            for (std::size_t y = 0; y < n; ++y) p[x][u][y] = (1.0 - eps) * mdp.transition(x, u, y) + eps * q[y];
            double total = 0.0;
            for (double v : p[x][u]) total += v;
            for (double& v : p[x][u]) v /= total;
        }
    return TabularMdp::from_dense(p, {}, mdp.mu0());
}

}  // namespace

TEST_CASE("local entropy of single rows", "[entropy]") {
    const auto mc = MarkovChain::from_dense({{0.0, 1.0, 0.0}, {0.5, 0.5, 0.0}, {0.7, 0.2, 0.1}}, {1.0, 0.0, 0.0});
    CHECK(local_entropy(mc, 0) == 0.0);
    CHECK_THAT(local_entropy(mc, 1), WithinAbs(kLn2, 1e-15));
    CHECK_THAT(local_entropy(mc, 2), WithinAbs(0.8018185525433372, 1e-12));
}

TEST_CASE("shannon entropy treats zero mass as contributing nothing", "[entropy]") {
    const std::vector<double> p = {0.0, 0.25, 0.0, 0.75};
    CHECK_THAT(shannon_entropy(p), WithinAbs(-0.25 * std::log(0.25) - 0.75 * std::log(0.75), 1e-15));
    CHECK(std::isfinite(shannon_entropy(std::vector<double>{1.0, 0.0})));
}

TEST_CASE("surrogate entropy of deterministic and uniform actions", "[entropy]") {
    const std::size_t n = 5;
    std::vector<std::vector<std::vector<double>>> p(n, std::vector<std::vector<double>>(2, std::vector<double>(n)));
    for (std::size_t x = 0; x < n; ++x) {
        p[x][0][(x + 1) % n] = 1.0;
        for (auto& v : p[x][1]) v = 1.0 / static_cast<double>(n);
    }
    const auto mdp = TabularMdp::from_dense(p, {}, std::vector<double>(n, 0.2));
    for (std::size_t x = 0; x < n; ++x) {
        CHECK(surrogate_entropy(mdp, x, 0) == 0.0);
        CHECK_THAT(surrogate_entropy(mdp, x, 1), WithinAbs(std::log(5.0), 1e-14));
    }
}

TEST_CASE("mixing two deterministic actions separates local and surrogate entropy", "[entropy]") {
    const auto mdp = two_state_diagnostic();
    for (double a : {0.1, 0.3, 0.5}) {
        const StochasticPolicy pi(2, 2, {a, 1.0 - a, a, 1.0 - a});
        const auto mc = compose(mdp, pi);
        const double h_alpha = -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
        for (std::size_t x = 0; x < 2; ++x) {
            const double es = a * surrogate_entropy(mdp, x, 0) + (1.0 - a) * surrogate_entropy(mdp, x, 1);
            CHECK(es == 0.0);
            CHECK_THAT(local_entropy(mc, x), WithinAbs(h_alpha, 1e-14));
        }
        CHECK(surrogate_rate_exact(mdp, pi) == 0.0);
        CHECK_THAT(entropy_rate_exact(mdp, pi), WithinAbs(h_alpha, 1e-12));
    }
}

TEST_CASE("entropy rates of small closed-form chains", "[entropy]") {
    const auto det = TabularMdp::from_dense({{{0, 1, 0}}, {{0, 0, 1}}, {{1, 0, 0}}}, {}, {1.0, 0.0, 0.0});
    CHECK(entropy_rate_exact(det, DeterministicPolicy({0, 0, 0}, 1)) == 0.0);

    const auto coin = TabularMdp::from_dense({{{0.5, 0.5}}, {{0.5, 0.5}}}, {}, {0.9, 0.1});
    CHECK_THAT(entropy_rate_exact(coin, StochasticPolicy::uniform(2, 1)), WithinAbs(kLn2, 1e-12));
}

TEST_CASE("entropy rate matches a plug-in estimate from a long rollout", "[entropy]") {
    const auto mdp = random_ergodic_mdp(4, 2, 1.0, 42);
    auto rng = make_rng(42);
    const auto pi = sample_dirichlet_policy(4, 2, rng);
    std::vector<std::size_t> states;
    rollout_pairs(mdp, pi, 1'000'000, 43, &states);
    std::vector<std::vector<double>> counts(4, std::vector<double>(4, 0.0));
    for (std::size_t t = 0; t + 1 < states.size(); ++t) counts[states[t]][states[t + 1]] += 1.0;
    double plug_in = 0.0;
    const double total = static_cast<double>(states.size() - 1);
    for (const auto& row : counts) {
        double visits = 0.0;
        for (double c : row) visits += c;
        std::vector<double> p;
        for (double c : row) p.push_back(c / visits);
        plug_in += visits / total * shannon_entropy(p);
    }
    CHECK_THAT(plug_in, WithinAbs(entropy_rate_exact(mdp, pi), 5e-3));
}

TEST_CASE("report invariants hold on random inputs", "[entropy][property]") {
    auto rng = make_rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 7, m = 1 + trial % 3;
        const auto mdp = random_ergodic_mdp(n, m, 0.2 + 0.01 * trial, 7000 + trial);
        const auto rep = entropy_report(mdp, sample_dirichlet_policy(n, m, rng));
        for (double l : rep.local) {
            CHECK(l >= 0.0);
            CHECK(l <= std::log(static_cast<double>(n)) + 1e-12);
        }
        CHECK(rep.surrogate_rate <= rep.rate + 1e-10);
    }
}

TEST_CASE("expected surrogate never exceeds local entropy", "[entropy][property]") {
    auto rng = make_rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + trial % 5, m = 1 + trial % 3;
        const auto mdp = random_ergodic_mdp(n, m, 0.1 + 0.002 * trial, 10'000 + trial);
        const auto pi = sample_dirichlet_policy(n, m, rng);
        const auto mc = compose(mdp, pi);
        const std::size_t x = static_cast<std::size_t>(trial) % n;
        double es = 0.0;
        for (std::size_t u = 0; u < m; ++u) es += pi(x, u) * surrogate_entropy(mdp, x, u);
        CHECK(es <= local_entropy(mc, x) + 1e-10);
        CHECK(surrogate_rate_exact(mdp, pi) <= entropy_rate_exact(mdp, pi) + 1e-10);
    }
}

TEST_CASE("deterministic policies have equal surrogate and true rates", "[entropy][property]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 2 + seed % 3, m = 2 + seed % 2;
        const auto mdp = random_ergodic_mdp(n, m, 0.5, 20'000 + seed);
        enumerate_deterministic_policies(mdp).for_each([&](const DeterministicPolicy& pi) {
            const auto mc = compose(mdp, pi);
            for (std::size_t x = 0; x < n; ++x)
                CHECK_THAT(surrogate_entropy(mdp, x, pi[x]), WithinAbs(local_entropy(mc, x), 1e-12));
            CHECK_THAT(surrogate_rate_exact(mdp, pi), WithinAbs(entropy_rate_exact(mdp, pi), 1e-10));
        });
    }
}

TEST_CASE("fannes bound closed forms", "[fannes]") {
    CHECK(fannes_bound(0.0, 5) == 0.0);
    CHECK_THAT(fannes_bound(0.5, 2), WithinAbs(kLn2, 1e-15));
    CHECK_THAT(fannes_bound(1.0, 3), WithinAbs(kLn2, 1e-15));
    CHECK(fannes_bound(1e-300, 4) < 1e-290);
    CHECK_THROWS_AS(fannes_bound(-0.01, 3), std::invalid_argument);
    CHECK_THROWS_AS(fannes_bound(1.01, 3), std::invalid_argument);
    CHECK_THROWS_AS(fannes_bound(0.1, 1), std::invalid_argument);
}

TEST_CASE("perturbed models stay within the fannes bound", "[fannes][property]") {
    auto rng = make_rng(77);
    for (double eps : {0.01, 0.05, 0.1}) {
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t n = 3 + trial % 4, m = 2;
            const auto mdp = random_ergodic_mdp(n, m, 0.5, 30'000 + trial);
            const auto model = perturb(mdp, eps, rng);
            const double k = fannes_bound(eps, n);
            double worst_tv = 0.0;
            for (std::size_t x = 0; x < n; ++x)
                for (std::size_t u = 0; u < m; ++u) {
                    std::vector<double> a(n), b(n);
                    for (std::size_t y = 0; y < n; ++y) {
                        a[y] = mdp.transition(x, u, y);
                        b[y] = model.transition(x, u, y);
                    }
                    worst_tv = std::max(worst_tv, tv_distance(a, b));
                    CHECK(std::abs(surrogate_entropy(model, x, u) - surrogate_entropy(mdp, x, u)) <= k);
                }
            REQUIRE(worst_tv <= eps + 1e-12);
            const auto pi = sample_dirichlet_policy(n, m, rng);
            const auto traj = rollout_pairs(mdp, pi, 20'000, 40'000 + trial);
            const double with_model =
                empirical_surrogate_rate(traj, [&](std::size_t x, std::size_t u) { return surrogate_entropy(model, x, u); });
            const double with_truth =
                empirical_surrogate_rate(traj, [&](std::size_t x, std::size_t u) { return surrogate_entropy(mdp, x, u); });
            CHECK(std::abs(with_model - with_truth) <= k);
        }
    }
}

TEST_CASE("empirical surrogate rate", "[entropy]") {
    const auto det = TabularMdp::from_dense({{{0, 1}}, {{1, 0}}}, {}, {1.0, 0.0});
    const auto s_det = [&](std::size_t x, std::size_t u) { return surrogate_entropy(det, x, u); };
    const auto traj = rollout_pairs(det, StochasticPolicy::uniform(2, 1), 100, 1);
    CHECK(empirical_surrogate_rate(traj, s_det) == 0.0);

    const std::vector<std::pair<std::size_t, std::size_t>> one = {{1, 0}};
    CHECK(empirical_surrogate_rate(one, [](std::size_t x, std::size_t) { return 0.25 * static_cast<double>(x); }) == 0.25);
    CHECK_THROWS_AS(empirical_surrogate_rate(std::vector<std::pair<std::size_t, std::size_t>>{}, s_det),
                    std::invalid_argument);

    const auto mdp = random_ergodic_mdp(5, 3, 0.7, 55);
    auto rng = make_rng(55);
    const auto pi = sample_dirichlet_policy(5, 3, rng);
    const auto long_traj = rollout_pairs(mdp, pi, 100'000, 56);
    const double est =
        empirical_surrogate_rate(long_traj, [&](std::size_t x, std::size_t u) { return surrogate_entropy(mdp, x, u); });
    CHECK_THAT(est, WithinAbs(surrogate_rate_exact(mdp, pi), 0.05));
}

TEST_CASE("total variation distance", "[tv]") {
    const std::vector<double> p = {0.7, 0.3}, q = {0.5, 0.5}, a = {1.0, 0.0}, b = {0.0, 1.0};
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(tv_distance(a, b) == 1.0);
    CHECK_THAT(tv_distance(p, q), WithinAbs(0.2, 1e-15));
    CHECK_THROWS_AS(tv_distance(p, std::vector<double>{1.0}), std::invalid_argument);
}
