#include <doctest.h>

#include <cmath>

#include "oreo/envs.hpp"
#include "oreo/errors.hpp"
#include "oreo/math.hpp"
#include "oreo/mdp.hpp"
#include "oreo/rng.hpp"
#include "oreo/tables.hpp"
#include "support/test_mdps.hpp"

using namespace oreo;

namespace {

EnvSpec keyhole_spec(int vocab, int depth) {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = vocab;
  spec.depth = depth;
  return spec;
}

PolicyTable two_action_table(const TaskMdp& mdp, const State& s, double p0) {
  PolicyTable table;
  table.define_state(s, mdp.legal_actions(s),
                     {std::log(p0), std::log(1.0 - p0)});
  return table;
}

}  // namespace

TEST_CASE("transition appends the action token") {
  EnvSpec spec;
  spec.family = EnvFamily::kDigitChain;
  spec.vocab = 8;
  spec.depth = 1;
  spec.instances = 60;
  auto mdp = make_digit_chain(spec);
  const State s0 = mdp->initial_states()[59];  // prompt (7, 3)
  REQUIRE(s0.tokens == StateKey{7, 3});
  const State next = mdp->transition(s0, Action{5});
  CHECK(next.tokens == StateKey{7, 3, 5});
}

TEST_CASE("gridworld transition appends an observation token") {
  EnvSpec spec;
  spec.family = EnvFamily::kGridworld;
  spec.vocab = 0;
  spec.grid_width = 3;
  spec.grid_height = 1;
  spec.horizon = 4;
  auto mdp = make_gridworld(spec);
  const State s0 = mdp->initial_states()[0];
  const State next = mdp->transition(s0, Action{1});  // right
  REQUIRE(next.tokens.size() == s0.tokens.size() + 2);
  CHECK(next.tokens[s0.tokens.size()] == 1);
  CHECK(next.tokens.back() == 4 + 1);  // observation of cell 1
}

TEST_CASE("illegal action and terminal source are rejected") {
  auto mdp = make_keyhole(keyhole_spec(2, 1));
  const State s0 = mdp->initial_states()[0];
  CHECK_THROWS_AS(mdp->transition(s0, Action{5}), DomainError);
  const State done = mdp->transition(s0, Action{0});
  REQUIRE(done.terminal);
  CHECK_THROWS_AS(mdp->transition(done, Action{0}), ContractError);
}

TEST_CASE("transition is deterministic down to the encoding") {
  auto mdp = make_keyhole(keyhole_spec(3, 2));
  const State s0 = mdp->initial_states()[0];
  const State a = mdp->transition(s0, Action{2});
  const State b = mdp->transition(s0, Action{2});
  CHECK(a.tokens == b.tokens);
  CHECK(a.boundaries == b.boundaries);
  CHECK(a.terminal == b.terminal);
}

namespace {

Trajectory manual_traj(const TaskMdp& mdp, const State& s0,
                       const std::vector<TokenId>& tokens) {
  Trajectory traj;
  State cur = s0;
  for (TokenId t : tokens) {
    const double r = mdp.reward(cur, Action{t});
    State next = mdp.transition(cur, Action{t});
    traj.steps.push_back({cur, Action{t}, r});
    cur = next;
  }
  traj.final_state = cur;
  return traj;
}

}  // namespace

TEST_CASE("suffix_returns computes suffix sums") {
  auto mdp = make_keyhole(keyhole_spec(2, 3));  // key at 0, token 1
  const State s0 = mdp->initial_states()[0];

  const Trajectory rewarded = manual_traj(*mdp, s0, {1, 0, 0});
  CHECK(suffix_returns(rewarded) == std::vector<double>{1.0, 1.0, 1.0});

  const Trajectory unrewarded = manual_traj(*mdp, s0, {0, 0, 0});
  CHECK(suffix_returns(unrewarded) == std::vector<double>{0.0, 0.0, 0.0});

  EnvSpec two = keyhole_spec(2, 2);
  auto mdp2 = make_keyhole(two);
  const Trajectory t2 = manual_traj(*mdp2, mdp2->initial_states()[0], {1, 0});
  CHECK(suffix_returns(t2) == std::vector<double>{1.0, 1.0});

  // Idempotent re-derivation.
  CHECK(suffix_returns(rewarded) == suffix_returns(rewarded));
}

TEST_CASE("log_ratio") {
  auto mdp = make_keyhole(keyhole_spec(2, 1));
  const State s0 = mdp->initial_states()[0];
  const PolicyTable ref = make_uniform_reference(*mdp);

  SUBCASE("identical policies give zero") {
    for (Action a : mdp->legal_actions(s0))
      CHECK(log_ratio(ref, ref, s0, a) == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("0.8 over 0.5 gives log 1.6") {
    const PolicyTable pi = two_action_table(*mdp, s0, 0.8);
    const double expected = std::log(0.8) - std::log(0.5);  // independent
    CHECK(log_ratio(pi, ref, s0, Action{0}) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(log_ratio(pi, ref, s0, Action{0}) ==
          doctest::Approx(std::log(1.6)).epsilon(1e-12));
  }

  SUBCASE("zero reference support is an error") {
    PolicyTable ref_hole;
    ref_hole.define_state(s0, mdp->legal_actions(s0),
                          {0.0, -std::numeric_limits<double>::infinity()});
    const PolicyTable pi = two_action_table(*mdp, s0, 0.5);
    CHECK_THROWS_AS(log_ratio(pi, ref_hole, s0, Action{1}), SupportError);
  }
}

TEST_CASE("kl_to_reference") {
  auto mdp = make_keyhole(keyhole_spec(2, 1));
  const State s0 = mdp->initial_states()[0];
  const PolicyTable ref = make_uniform_reference(*mdp);

  SUBCASE("zero at equality") {
    CHECK(kl_to_reference(ref, ref, s0) == 0.0);
  }

  SUBCASE("matches a brute-force two-term sum") {
    const double eps = 0.1;
    const PolicyTable pi = two_action_table(*mdp, s0, 1.0 - eps);
    // independent oracle: direct two-term KL
    const double expected = (1.0 - eps) * std::log((1.0 - eps) / 0.5) +
                            eps * std::log(eps / 0.5);
    CHECK(kl_to_reference(pi, ref, s0) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(kl_to_reference(pi, ref, s0) ==
          doctest::Approx(0.3681).epsilon(1e-4));
  }

  SUBCASE("non-negative on random tables, zero under constant shift") {
    Rng rng(7);
    auto tree = testing::TreeMdp::random(rng, 4, 4);
    const PolicyTable a = testing::random_policy(tree, rng);
    const PolicyTable b = testing::random_policy(tree, rng);
    for (const State& s : enumerate_states(tree)) {
      if (s.terminal) continue;
      CHECK(kl_to_reference(a, b, s) >= 0.0);
    }
    // shift-invariance: logits + c is the same distribution
    PolicyTable shifted;
    for (const State& s : enumerate_states(tree)) {
      if (s.terminal) continue;
      auto logits = a.entry(s).logits;
      for (double& z : logits) z += 3.25;
      shifted.define_state(s, tree.legal_actions(s), logits);
    }
    for (const State& s : enumerate_states(tree)) {
      if (s.terminal) continue;
      CHECK(kl_to_reference(a, shifted, s) <= 1e-12);
    }
  }

  SUBCASE("mismatched action sets are a contract error") {
    PolicyTable narrow;
    narrow.define_state(s0, {Action{0}}, {0.0});
    CHECK_THROWS_AS(kl_to_reference(narrow, ref, s0), ContractError);
  }
}

TEST_CASE("softmax normalization on random logits") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(6);
    std::vector<double> logits(n);
    for (double& z : logits) z = 5.0 * rng.next_normal();
    const auto p = softmax(logits);
    double total = 0.0;
    for (double x : p) {
      CHECK(x > 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("step_log_prob") {
  auto mdp = make_keyhole(keyhole_spec(2, 3));
  const State s0 = mdp->initial_states()[0];
  const PolicyTable ref = make_uniform_reference(*mdp);

  SUBCASE("single token equals log prob") {
    const std::vector<TokenId> one{1};
    CHECK(step_log_prob(ref, *mdp, s0, one) ==
          doctest::Approx(ref.log_prob(s0, Action{1})).epsilon(1e-15));
  }

  SUBCASE("two uniform tokens give log 1/4") {
    const std::vector<TokenId> two{1, 0};
    CHECK(step_log_prob(ref, *mdp, s0, two) ==
          doctest::Approx(std::log(0.25)).epsilon(1e-12));
  }

  SUBCASE("empty step is the empty product") {
    CHECK(step_log_prob(ref, *mdp, s0, {}) == 0.0);
  }

  SUBCASE("illegal token mid-step is a domain error") {
    const std::vector<TokenId> bad{1, 9};
    CHECK_THROWS_AS(step_log_prob(ref, *mdp, s0, bad), DomainError);
  }

  SUBCASE("chain rule over concatenated steps") {
    Rng rng(3);
    const PolicyTable pi = testing::random_policy(*mdp, rng);
    const std::vector<TokenId> head{1};
    const std::vector<TokenId> tail{0, 1};
    const std::vector<TokenId> both{1, 0, 1};
    const State mid = mdp->transition(s0, Action{1});
    CHECK(step_log_prob(pi, *mdp, s0, both) ==
          doctest::Approx(step_log_prob(pi, *mdp, s0, head) +
                          step_log_prob(pi, *mdp, mid, tail))
              .epsilon(1e-12));
  }
}

TEST_CASE("trajectory validation catches corrupted records") {
  auto mdp = make_keyhole(keyhole_spec(2, 2));
  const State s0 = mdp->initial_states()[0];
  Trajectory traj = manual_traj(*mdp, s0, {1, 0});
  CHECK_NOTHROW(validate_trajectory(*mdp, traj));

  Trajectory broken = traj;
  broken.steps[1].state.tokens.back() ^= 1;
  CHECK_THROWS_AS(validate_trajectory(*mdp, broken), ContractError);

  Trajectory early_reward = traj;
  early_reward.steps[0].reward = 1.0;
  CHECK_THROWS_AS(validate_trajectory(*mdp, early_reward), ContractError);
}

TEST_CASE("step_segments groups steps by boundary growth") {
  EnvSpec spec;
  spec.family = EnvFamily::kDigitChain;
  spec.vocab = 3;
  spec.depth = 2;
  spec.tokens_per_step = 2;
  auto mdp = make_digit_chain(spec);
  const State s0 = mdp->initial_states()[0];
  const Trajectory traj = manual_traj(*mdp, s0, {0, 0, 1, 0});
  const auto segments = step_segments(traj);
  REQUIRE(segments.size() == 2);
  CHECK(segments[0] == std::pair<std::size_t, std::size_t>{0, 2});
  CHECK(segments[1] == std::pair<std::size_t, std::size_t>{2, 4});
}
