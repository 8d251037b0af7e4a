#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "parl/envs.hpp"
#include "parl/oracles.hpp"
#include "parl/suites.hpp"

using namespace parl;
using Catch::Matchers::WithinAbs;

namespace {

/// Action 0 rotates x -> x+1 deterministically; every other action is uniform.
TabularMdp one_quiet_action(std::size_t n, std::size_t m) {
    std::vector<std::vector<std::vector<double>>> p(n, std::vector<std::vector<double>>(m, std::vector<double>(n)));
    for (std::size_t x = 0; x < n; ++x) {
        p[x][0][(x + 1) % n] = 1.0;
        for (std::size_t u = 1; u < m; ++u)
            for (auto& v : p[x][u]) v = 1.0 / static_cast<double>(n);
    }
    return TabularMdp::from_dense(p, {}, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

}  // namespace

TEST_CASE("enumeration counts and order", "[enumerate]") {
    CHECK(PolicyEnumeration(1, 3).size() == 3);
    const auto all = PolicyEnumeration(3, 2).all();
    REQUIRE(all.size() == 8);
    CHECK(all.front().actions() == std::vector<std::size_t>{0, 0, 0});
    CHECK(all[1].actions() == std::vector<std::size_t>{0, 0, 1});
    CHECK(all.back().actions() == std::vector<std::size_t>{1, 1, 1});
}

TEST_CASE("enumeration of 4 states and 3 actions is duplicate free", "[enumerate]") {
    const PolicyEnumeration en(4, 3);
    std::set<std::vector<std::size_t>> seen;
    std::uint64_t k = 0;
    en.for_each([&](const DeterministicPolicy& pi) {
        seen.insert(pi.actions());
        CHECK(en.at(k).actions() == pi.actions());
        ++k;
    });
    CHECK(k == 81);
    CHECK(seen.size() == 81);
}

TEST_CASE("enumeration refuses to exceed its budget", "[enumerate]") {
    CHECK_THROWS_AS(PolicyEnumeration(10, 4, 1000), EnumerationBudgetError);
    CHECK_THROWS_AS(PolicyEnumeration(3, 10, 999), EnumerationBudgetError);
    CHECK_NOTHROW(PolicyEnumeration(3, 10, 1000));
}

TEST_CASE("min entropy certificate on closed-form MDPs", "[oracle]") {
    const auto cert = min_entropy_deterministic(one_quiet_action(4, 3));
    CHECK(cert.argmin_policy.actions() == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK_THAT(cert.min_surrogate_rate, WithinAbs(0.0, 1e-12));
    CHECK_THAT(cert.min_true_rate, WithinAbs(0.0, 1e-12));
    CHECK(cert.n_policies_enumerated == 81);

    const std::vector<double> r0 = {0.2, 0.5, 0.3}, r1 = {0.6, 0.2, 0.2}, r2 = {0.1, 0.1, 0.8};
    const auto same = TabularMdp::from_dense({{r0, r0}, {r1, r1}, {r2, r2}}, {}, {1.0, 0.0, 0.0});
    const auto tie = min_entropy_deterministic(same);
    CHECK(tie.argmin_policy.actions() == std::vector<std::size_t>{0, 0, 0});
    CHECK_THAT(tie.min_true_rate, WithinAbs(entropy_rate_exact(same, StochasticPolicy::uniform(3, 2)), 1e-12));
}

TEST_CASE("certificate does not depend on threads or batch size", "[oracle]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto mdp = random_ergodic_mdp(5, 3, 0.3, seed);
        const auto serial = min_entropy_deterministic(mdp);
        OracleOptions o;
        o.threads = 3;
        o.batch_size = 7;
        const auto parallel = min_entropy_deterministic(mdp, o);
        CHECK(serial.argmin_policy.actions() == parallel.argmin_policy.actions());
        CHECK(serial.min_surrogate_rate == parallel.min_surrogate_rate);
    }
}

TEST_CASE("deterministic argmin beats sampled stochastic policies", "[oracle][property]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto mdp = random_ergodic_mdp(4, 3, 1.0, 50'000 + seed);
        const auto cert = min_entropy_deterministic(mdp);
        CHECK_THAT(cert.min_surrogate_rate, WithinAbs(cert.min_true_rate, 1e-10));
        auto rng = make_rng(seed);
        for (int i = 0; i < 200; ++i)
            CHECK(cert.min_true_rate <= entropy_rate_exact(mdp, sample_dirichlet_policy(4, 3, rng)) + 1e-10);
    }
}

TEST_CASE("relative value iteration agrees with enumeration", "[oracle][property]") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto mdp = random_ergodic_mdp(4, 3, 0.5, 60'000 + seed);
        const auto s = surrogate_table(mdp);
        std::vector<double> neg(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
        const auto sol = avg_reward_optimal(mdp, neg, Sense::maximize);
        const auto cert = min_entropy_deterministic(mdp);
        CHECK_THAT(sol.gain, WithinAbs(-cert.min_surrogate_rate, 1e-8));
        CHECK_THAT(sol.rvi_gain, WithinAbs(sol.gain, 1e-8));
        const auto direct = avg_reward_optimal(mdp, s, Sense::minimize);
        CHECK_THAT(direct.gain, WithinAbs(cert.min_surrogate_rate, 1e-8));
    }
}

TEST_CASE("relative value iteration on trivial problems", "[oracle]") {
    const auto mdp = random_ergodic_mdp(3, 2, 1.0, 9);
    const auto flat = avg_reward_optimal(mdp, std::vector<double>(6, 0.4), Sense::maximize);
    CHECK_THAT(flat.gain, WithinAbs(0.4, 1e-10));

    const auto single = random_ergodic_mdp(4, 1, 1.0, 10);
    std::vector<double> r = {0.1, 0.9, 0.3, 0.5};
    const auto sol = avg_reward_optimal(single, r, Sense::maximize);
    const auto gb = gain_and_bias(compose(single, DeterministicPolicy({0, 0, 0, 0}, 1)), r);
    CHECK_THAT(sol.gain, WithinAbs(gb.gain, 1e-8));
    CHECK_THROWS_AS(avg_reward_optimal(single, std::vector<double>{1.0}, Sense::maximize), std::invalid_argument);
}

TEST_CASE("relative value iteration handles periodic deterministic policies", "[oracle]") {
    // The only action flips between the two states.
    const auto flip = TabularMdp::from_dense({{{0.0, 1.0}}, {{1.0, 0.0}}}, {}, {1.0, 0.0});
    const auto sol = avg_reward_optimal(flip, {1.0, 0.0}, Sense::maximize);
    CHECK_THAT(sol.gain, WithinAbs(0.5, 1e-9));
}

TEST_CASE("equivalence report on a deterministic MDP", "[oracle]") {
    const auto det = TabularMdp::from_dense({{{0, 1, 0}, {0, 0, 1}}, {{0, 0, 1}, {1, 0, 0}}, {{1, 0, 0}, {0, 1, 0}}}, {},
                                            {1.0, 0.0, 0.0});
    const auto rep = verify_equivalence_theorem(det, 50, 1);
    CHECK(rep.passed());
    CHECK(rep.certificate.min_true_rate == 0.0);
    CHECK(rep.certificate.min_surrogate_rate == 0.0);
}

TEST_CASE("stochastic mixtures lose to the deterministic minimum", "[oracle]") {
    const auto rep = verify_equivalence_theorem(two_state_diagnostic(), 200, 3);
    CHECK(rep.passed());
    CHECK_THAT(rep.certificate.min_true_rate, WithinAbs(0.0, 1e-12));
    CHECK(rep.stochastic_slack > 0.0);
}

TEST_CASE("equivalence holds on random ergodic MDPs", "[oracle][property]") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto rep = verify_equivalence_theorem(random_ergodic_mdp(4, 3, 1.0, 70'000 + seed), 200, seed);
        CHECK(rep.argmin_ok());
        CHECK(rep.deterministic_ok());
        CHECK(rep.stochastic_ok());
        const auto j = equivalence_report_to_json(rep);
        CHECK(j.at("certificate").at("n_policies_enumerated") == 81);
    }
}

TEST_CASE("property suites report slack and warnings", "[suites]") {
    const auto empty = lemma1_suite(0, 1);
    CHECK(empty.pass());
    REQUIRE(empty.warnings.size() == 1);
    CHECK_THAT(empty.warnings[0], Catch::Matchers::ContainsSubstring("vacuous"));

    const auto lemma = lemma1_suite(100, 2);
    CHECK(lemma.pass());
    for (const auto& p : lemma.properties) CHECK(p.checks > 0);

    auto theorem = theorem_suite(5, 3);
    CHECK(theorem.pass());
    CHECK(theorem.property("stochastic_not_beaten").worst_slack > 0.0);

    CHECK_THROWS_AS(run_suite("nope", 1, 0), std::invalid_argument);
}

TEST_CASE("property suites are reproducible", "[suites]") {
    const auto a = suite_report_to_json(fannes_suite(2, 5));
    const auto b = suite_report_to_json(fannes_suite(2, 5));
    CHECK(a.dump() == b.dump());
    CHECK(a.at("pass") == true);
}
