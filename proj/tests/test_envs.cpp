#include <doctest.h>

#include <cmath>
#include <set>

#include "oreo/dataset.hpp"
#include "oreo/envs.hpp"
#include "oreo/errors.hpp"
#include "oreo/oracle.hpp"
#include "oreo/rng.hpp"

using namespace oreo;

namespace {

// Test oracle: recompute the digit-chain answer by hand.
TokenId expected_chain_token(int a, int b, int j, int modulus) {
  return static_cast<TokenId>((a + j * b) % modulus);
}

}  // namespace

TEST_CASE("digit-chain rewards the running-sum continuation") {
  EnvSpec spec;
  spec.family = EnvFamily::kDigitChain;
  spec.vocab = 5;
  spec.depth = 1;
  spec.instances = 25;
  auto mdp = make_digit_chain(spec);

  // instance with prompt (2, 4): the rewarded final token is (2+4) mod 5 = 1
  const int k = 2 * 5 + 4;
  const State s0 = mdp->initial_states()[static_cast<std::size_t>(k)];
  REQUIRE(s0.tokens == StateKey{2, 4});
  for (TokenId t = 0; t < 5; ++t) {
    const double r = mdp->reward(s0, Action{t});
    const TokenId want = expected_chain_token(2, 4, 1, 5);
    CHECK(r == (t == want ? 1.0 : 0.0));
  }
  CHECK(expected_chain_token(2, 4, 1, 5) == 1);
}

TEST_CASE("digit-chain has exactly one rewarded leaf per instance") {
  EnvSpec spec;
  spec.family = EnvFamily::kDigitChain;
  spec.vocab = 4;
  spec.depth = 2;
  spec.instances = 16;
  auto mdp = make_digit_chain(spec);
  const OfflineDataset all = enumerate_dataset(*mdp);
  std::vector<int> rewarded_per_task(16, 0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.trajectories[i].terminal_reward() > 0.0)
      ++rewarded_per_task[static_cast<std::size_t>(all.task_ids[i])];
  }
  for (int count : rewarded_per_task) CHECK(count == 1);

  // and the rewarded leaf is the running-sum chain
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.trajectories[i].terminal_reward() == 0.0) continue;
    const auto& tokens = all.trajectories[i].final_state.tokens;
    const int a = tokens[0];
    const int b = tokens[1];
    for (int j = 1; j <= spec.depth; ++j)
      CHECK(tokens[static_cast<std::size_t>(1 + j)] ==
            expected_chain_token(a, b, j, 4));
  }
}

TEST_CASE("digit-chain spec validation") {
  EnvSpec spec;
  spec.family = EnvFamily::kDigitChain;
  spec.vocab = 4;
  spec.depth = 0;
  CHECK_THROWS_AS(make_digit_chain(spec), ConfigError);
  spec.depth = 1;
  spec.modulus = 9;
  CHECK_THROWS_AS(make_digit_chain(spec), ConfigError);
}

TEST_CASE("keyhole leaf counting and oracle behavior") {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = 2;
  spec.depth = 3;
  spec.key_position = 0;
  spec.key_token = 1;
  auto mdp = make_keyhole(spec);

  SUBCASE("4 of 8 leaves are rewarded") {
    const OfflineDataset all = enumerate_dataset(*mdp);
    REQUIRE(all.size() == 8);
    int rewarded = 0;
    for (const Trajectory& t : all.trajectories)
      if (t.terminal_reward() > 0.0) ++rewarded;
    CHECK(rewarded == 4);
  }

  SUBCASE("pi* concentrates on the key token at small beta") {
    const PolicyTable ref = make_uniform_reference(*mdp);
    const OracleResult oracle = soft_backward_induction(*mdp, ref, 0.05);
    CHECK(oracle.pi_star.prob(mdp->initial_states()[0], Action{1}) >= 0.99);
  }

  SUBCASE("pi* matches the reference at non-key positions") {
    const PolicyTable ref = make_uniform_reference(*mdp);
    for (double beta : {0.05, 0.5, 2.0}) {
      const OracleResult oracle = soft_backward_induction(*mdp, ref, beta);
      for (const State& s : enumerate_states(*mdp)) {
        if (s.terminal) continue;
        const int position = static_cast<int>(s.tokens.size()) - 1;
        if (position == spec.key_position) continue;
        CHECK(policy_total_variation(oracle.pi_star, ref, s) <= 1e-6);
      }
    }
  }
}

TEST_CASE("gridworld corridor") {
  EnvSpec spec;
  spec.family = EnvFamily::kGridworld;
  spec.vocab = 0;
  spec.grid_width = 3;
  spec.grid_height = 1;
  spec.start_cell = 0;
  spec.goal_cell = 2;
  spec.horizon = 4;
  auto mdp = make_gridworld(spec);
  const State s0 = mdp->initial_states()[0];

  SUBCASE("shortest rewarded action sequence is right, right") {
    const OfflineDataset all = enumerate_dataset(*mdp);
    std::size_t shortest = SIZE_MAX;
    std::vector<TokenId> actions;
    for (const Trajectory& t : all.trajectories) {
      if (t.terminal_reward() == 0.0) continue;
      if (t.size() < shortest) {
        shortest = t.size();
        actions.clear();
        for (const TrajStep& step : t.steps) actions.push_back(step.action.token);
      }
    }
    CHECK(shortest == 2);
    CHECK(actions == std::vector<TokenId>{1, 1});
  }

  SUBCASE("bumping a wall re-observes the same cell") {
    const State bumped = mdp->transition(s0, Action{0});  // left from cell 0
    CHECK(bumped.tokens.back() == s0.tokens.back());
    CHECK_FALSE(bumped.terminal);
  }

  SUBCASE("horizon exhaustion terminates with reward 0") {
    State cur = s0;
    double reward = 0.0;
    for (int i = 0; i < 4; ++i) {
      reward += mdp->reward(cur, Action{0});
      cur = mdp->transition(cur, Action{0});
    }
    CHECK(cur.terminal);
    CHECK(reward == 0.0);
    CHECK(mdp->legal_actions(cur).empty());
  }

  SUBCASE("decoded position always matches replayed dynamics") {
    Rng rng(9);
    const PolicyTable ref = make_uniform_reference(*mdp);
    for (int episode = 0; episode < 50; ++episode) {
      const Trajectory traj = rollout(*mdp, ref, s0, rng);
      int cell = 0;  // replay by hand through the grid rule
      for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const int x = cell % 3;
        const TokenId move = traj.steps[t].action.token;
        if (move == 0) cell = x > 0 ? cell - 1 : cell;
        if (move == 1) cell = x < 2 ? cell + 1 : cell;
        const State& next = t + 1 < traj.steps.size()
                                ? traj.steps[t + 1].state
                                : traj.final_state;
        CHECK(next.tokens.back() == 4 + cell);
      }
    }
  }

  SUBCASE("unreachable goal is a config error") {
    EnvSpec far = spec;
    far.horizon = 1;
    CHECK_THROWS_AS(make_gridworld(far), ConfigError);
  }
}

TEST_CASE("generate_offline_dataset") {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = 2;
  spec.depth = 3;
  auto mdp = make_keyhole(spec);
  const PolicyTable ref = make_uniform_reference(*mdp);

  SUBCASE("labels match recomputed rewards and trajectories validate") {
    const OfflineDataset dataset =
        generate_offline_dataset(*mdp, ref, 10, 123);
    REQUIRE(dataset.size() == 10);
    CHECK_NOTHROW(validate_dataset(*mdp, dataset));
    for (const Trajectory& t : dataset.trajectories) {
      const TrajStep& last = t.steps.back();
      CHECK(t.terminal_reward() == mdp->reward(last.state, last.action));
    }
  }

  SUBCASE("same seed reproduces the JSONL byte for byte") {
    const OfflineDataset a = generate_offline_dataset(*mdp, ref, 10, 7);
    const OfflineDataset b = generate_offline_dataset(*mdp, ref, 10, 7);
    CHECK(dataset_to_jsonl(a) == dataset_to_jsonl(b));
    const OfflineDataset c = generate_offline_dataset(*mdp, ref, 10, 8);
    CHECK(dataset_to_jsonl(a) != dataset_to_jsonl(c));
  }

  SUBCASE("a near-greedy behavior policy yields mostly positives") {
    const OracleResult oracle = soft_backward_induction(*mdp, ref, 0.05);
    const OfflineDataset dataset =
        generate_offline_dataset(*mdp, oracle.pi_star, 1000, 3);
    CHECK(dataset.positive_fraction() >= 0.95);
  }

  SUBCASE("n_per_task must be positive") {
    CHECK_THROWS_AS(generate_offline_dataset(*mdp, ref, 0, 1), ConfigError);
  }
}

TEST_CASE("balance filter keeps classes capped and non-inverted") {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = 2;
  spec.depth = 2;
  auto mdp = make_keyhole(spec);
  const PolicyTable ref = make_uniform_reference(*mdp);
  const OfflineDataset dataset = generate_offline_dataset(*mdp, ref, 64, 11);
  const OfflineDataset balanced = balance_dataset(dataset, 4, 5);
  int pos = 0, neg = 0;
  for (const Trajectory& t : balanced.trajectories)
    (t.terminal_reward() > 0.0 ? pos : neg)++;
  CHECK(pos <= 4);
  CHECK(neg <= 4);
  CHECK(pos <= neg);
  CHECK(pos >= 1);
  CHECK_NOTHROW(validate_dataset(*mdp, balanced));
}

TEST_CASE("reward_scale zero removes all reward") {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = 2;
  spec.depth = 2;
  spec.reward_scale = 0.0;
  auto mdp = make_keyhole(spec);
  for (const Trajectory& t : enumerate_dataset(*mdp).trajectories)
    CHECK(t.terminal_reward() == 0.0);
}
