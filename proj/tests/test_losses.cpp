#include <doctest.h>

#include <cmath>

#include "oreo/envs.hpp"
#include "oreo/errors.hpp"
#include "oreo/losses.hpp"
#include "oreo/oracle.hpp"
#include "oreo/rng.hpp"
#include "oreo/trainer.hpp"
#include "support/finite_diff.hpp"
#include "support/test_mdps.hpp"

using namespace oreo;
using oreo::testing::TreeMdp;

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

ValueTable zero_value(const TaskMdp& mdp) {
  ValueTable v;
  for (const State& s : enumerate_states(mdp)) {
    if (s.terminal) continue;
    v.set(s, 0.0);
  }
  return v;
}

EnvSpec keyhole_spec(int vocab, int depth) {
  EnvSpec spec;
  spec.family = EnvFamily::kKeyhole;
  spec.vocab = vocab;
  spec.depth = depth;
  return spec;
}

}  // namespace

TEST_CASE("value_loss examples") {
  auto mdp = make_keyhole(keyhole_spec(2, 3));
  const State s0 = mdp->initial_states()[0];
  const PolicyTable ref = make_uniform_reference(*mdp);
  const Trajectory traj = manual_traj(*mdp, s0, {1, 0, 1});  // rewarded

  SUBCASE("zero when V matches the suffix returns under pi = ref") {
    ValueTable v;
    const auto returns = suffix_returns(traj);
    for (std::size_t t = 0; t < traj.steps.size(); ++t)
      v.set(traj.steps[t].state, returns[t]);
    CHECK(value_loss(traj, v, ref, ref, 0.5) == 0.0);
  }

  SUBCASE("single-step reward-1 trajectory with zero V gives 1") {
    auto one = make_keyhole(keyhole_spec(2, 1));
    const Trajectory t1 = manual_traj(*one, one->initial_states()[0], {1});
    REQUIRE(t1.terminal_reward() == 1.0);
    const PolicyTable ref1 = make_uniform_reference(*one);
    const ValueTable v = zero_value(*one);
    CHECK(value_loss(t1, v, ref1, ref1, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("vanishes at the oracle") {
    const TreeMdp m1 = TreeMdp::single_step({1.0, 0.0});
    const PolicyTable ref1 = make_uniform_reference(m1);
    const OracleResult oracle = soft_backward_induction(m1, ref1, 1.0);
    for (TokenId t : {0, 1}) {
      const Trajectory tr = manual_traj(m1, m1.initial_states()[0], {t});
      CHECK(value_loss(tr, oracle.v_star, oracle.pi_star, ref1, 1.0) <=
            1e-18);
    }
  }
}

TEST_CASE("policy losses at and away from the oracle") {
  auto mdp = make_keyhole(keyhole_spec(2, 3));
  const PolicyTable ref = make_uniform_reference(*mdp);
  const double beta = 0.5;
  const OracleResult oracle = soft_backward_induction(*mdp, ref, beta);
  const OfflineDataset all = enumerate_dataset(*mdp);

  SUBCASE("zero-reward MDP at pi = ref with V = 0") {
    EnvSpec spec = keyhole_spec(2, 3);
    spec.reward_scale = 0.0;
    auto flat = make_keyhole(spec);
    const PolicyTable fref = make_uniform_reference(*flat);
    const ValueTable v = zero_value(*flat);
    const Trajectory traj =
        manual_traj(*flat, flat->initial_states()[0], {0, 1, 0});
    CHECK(policy_loss_token(traj, v, fref, fref, beta, 0.01) == 0.0);
    CHECK(policy_loss_step(traj, v, fref, fref, beta, 0.01) == 0.0);
    CHECK(policy_loss_response(traj, v, fref, fref, beta, 0.01) == 0.0);
  }

  SUBCASE("all variants vanish at the oracle with alpha = 0") {
    for (const Trajectory& traj : all.trajectories) {
      CHECK(policy_loss_token(traj, oracle.v_star, oracle.pi_star, ref, beta,
                              0.0) <= 1e-18);
      CHECK(policy_loss_step(traj, oracle.v_star, oracle.pi_star, ref, beta,
                             0.0) <= 1e-18);
      CHECK(policy_loss_response(traj, oracle.v_star, oracle.pi_star, ref,
                                 beta, 0.0) <= 1e-18);
    }
  }

  SUBCASE("alpha > 0 at the oracle leaves exactly the KL term") {
    const double alpha = 0.3;
    for (const Trajectory& traj : all.trajectories) {
      double mean_kl = 0.0;
      for (const TrajStep& step : traj.steps)
        mean_kl += kl_to_reference(oracle.pi_star, ref, step.state);
      mean_kl /= static_cast<double>(traj.size());
      CHECK(policy_loss_token(traj, oracle.v_star, oracle.pi_star, ref, beta,
                              alpha) ==
            doctest::Approx(alpha * mean_kl).epsilon(1e-12));
    }
  }

  SUBCASE("step loss with unit steps equals the token loss") {
    Rng rng(21);
    const PolicyTable pi = testing::random_policy(*mdp, rng);
    const ValueTable v = testing::random_value(*mdp, rng);
    for (const Trajectory& traj : all.trajectories) {
      const double token = policy_loss_token(traj, v, pi, ref, beta, 0.01);
      const double step = policy_loss_step(traj, v, pi, ref, beta, 0.01);
      CHECK(std::abs(token - step) <= 1e-12);
    }
  }

  SUBCASE("two-token steps use the summed in-step log-ratio") {
    EnvSpec spec;
    spec.family = EnvFamily::kDigitChain;
    spec.vocab = 2;
    spec.depth = 1;
    spec.tokens_per_step = 2;
    auto chain = make_digit_chain(spec);
    const PolicyTable cref = make_uniform_reference(*chain);
    Rng rng(4);
    const PolicyTable pi = testing::random_policy(*chain, rng);
    const ValueTable v = testing::random_value(*chain, rng);
    const Trajectory traj =
        manual_traj(*chain, chain->initial_states()[0], {1, 0});
    // one segment: residual = V(s0) - R_0 + beta * (lr_0 + lr_1)
    const LossTerms terms = compute_loss_terms(traj, pi, cref);
    const double residual = v.value(traj.steps[0].state) - terms.returns[0] +
                            beta * (terms.log_ratios[0] + terms.log_ratios[1]);
    CHECK(policy_loss_step(traj, v, pi, cref, beta, 0.0) ==
          doctest::Approx(residual * residual).epsilon(1e-12));
  }

  SUBCASE("missing step markers are a contract error") {
    Trajectory traj = all.trajectories[0];
    for (TrajStep& step : traj.steps) step.state.boundaries.clear();
    traj.final_state.boundaries.clear();
    Rng rng(4);
    const ValueTable v = zero_value(*mdp);
    CHECK_THROWS_AS(policy_loss_step(traj, v, ref, ref, beta, 0.0),
                    ContractError);
  }
}

TEST_CASE("response residual equals the t = 0 value residual bit for bit") {
  auto mdp = make_keyhole(keyhole_spec(3, 3));
  const PolicyTable ref = make_uniform_reference(*mdp);
  Rng rng(31);
  const PolicyTable pi = testing::random_policy(*mdp, rng);
  const ValueTable v = testing::random_value(*mdp, rng);
  for (const Trajectory& traj : enumerate_dataset(*mdp).trajectories) {
    const auto residuals = consistency_residuals(traj, v, pi, ref, 0.7);
    CHECK(response_residual(traj, v, pi, ref, 0.7) == residuals[0]);
  }
}

TEST_CASE("per-step residuals telescope to the trajectory relation") {
  auto mdp = make_keyhole(keyhole_spec(2, 4));
  const PolicyTable ref = make_uniform_reference(*mdp);
  Rng rng(17);
  const PolicyTable pi = testing::random_policy(*mdp, rng);
  const ValueTable v = testing::random_value(*mdp, rng);
  const double beta = 0.9;
  for (const Trajectory& traj : enumerate_dataset(*mdp).trajectories) {
    const LossTerms terms = compute_loss_terms(traj, pi, ref);
    const std::size_t n = traj.steps.size();
    // per-step residual: V(s_t) - V(s_{t+1}) - r_t + beta * lr_t; summed
    // over a suffix it must reproduce the telescoped residual at t.
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      const State& next =
          t + 1 < n ? traj.steps[t + 1].state : traj.final_state;
      acc += v.value(traj.steps[t].state) - v.value(next) -
             traj.steps[t].reward + beta * terms.log_ratios[t];
      CHECK(std::abs(acc - consistency_residual(traj, v, terms, beta, t)) <=
            1e-12);
    }
  }
}

TEST_CASE("gradients match finite differences") {
  Rng rng(6);
  const TreeMdp m1 = TreeMdp::single_step({1.0, 0.0});
  const PolicyTable ref = make_uniform_reference(m1);
  TrainConfig cfg;
  cfg.beta = 1.0;
  cfg.alpha = 0.05;

  const OfflineDataset all = enumerate_dataset(m1);
  PolicyTable pi = testing::random_policy(m1, rng);
  ValueTable v = testing::random_value(m1, rng);

  for (Variant variant :
       {Variant::kToken, Variant::kStep, Variant::kResponse}) {
    cfg.variant = variant;
    const BatchGradients grads =
        loss_gradients(all.trajectories, v, pi, ref, cfg);

    // value side: plain central differences of the mean value loss
    const auto value_fd = testing::fd_value_gradient(v, [&] {
      double acc = 0.0;
      for (const Trajectory& t : all.trajectories)
        acc += value_loss(t, v, pi, ref, cfg.beta);
      return acc / static_cast<double>(all.size());
    });
    CHECK(testing::compare_value_grads(grads.value, value_fd).ok);

    // policy side: frozen-tail surrogate
    std::vector<testing::FrozenTails> tails;
    for (const Trajectory& t : all.trajectories)
      tails.push_back(testing::freeze_tails(t, pi, ref, cfg.beta, variant));
    const auto policy_fd = testing::fd_policy_gradient(pi, [&] {
      double acc = 0.0;
      for (std::size_t i = 0; i < all.size(); ++i)
        acc += testing::policy_loss_frozen(all.trajectories[i], v, pi, ref,
                                           cfg.beta, cfg.alpha, variant,
                                           tails[i]);
      return acc / static_cast<double>(all.size());
    });
    CHECK(testing::compare_policy_grads(grads.policy, policy_fd).ok);
  }
}

TEST_CASE("stop-gradient: future actions contribute no policy gradient") {
  // Two-step chain so step 0's residual depends on step 1's log-ratio.
  auto mdp = make_keyhole(keyhole_spec(2, 2));
  const PolicyTable ref = make_uniform_reference(*mdp);
  Rng rng(13);
  PolicyTable pi = testing::random_policy(*mdp, rng);
  ValueTable v = testing::random_value(*mdp, rng);
  const Trajectory traj = manual_traj(*mdp, mdp->initial_states()[0], {1, 0});

  TrainConfig cfg;
  cfg.beta = 0.8;
  cfg.alpha = 0.0;
  cfg.variant = Variant::kToken;
  const std::vector<Trajectory> batch{traj};
  const BatchGradients grads = loss_gradients(batch, v, pi, ref, cfg);

  // Analytic gradient equals finite differences of the frozen-sum
  // surrogate...
  const auto tails = testing::freeze_tails(traj, pi, ref, cfg.beta,
                                           Variant::kToken);
  const auto frozen_fd = testing::fd_policy_gradient(pi, [&] {
    return testing::policy_loss_frozen(traj, v, pi, ref, cfg.beta, cfg.alpha,
                                       Variant::kToken, tails);
  });
  CHECK(testing::compare_policy_grads(grads.policy, frozen_fd).ok);

  // ...and differs from differentiating straight through the future sum.
  const auto through_fd = testing::fd_policy_gradient(pi, [&] {
    return policy_loss_token(traj, v, pi, ref, cfg.beta, cfg.alpha);
  });
  const StateKey future_key = traj.steps[1].state.tokens;
  bool differs = false;
  for (std::size_t i = 0; i < 2; ++i) {
    const double a = grads.policy.g.at(future_key)[i];
    const double f = through_fd.g.at(future_key)[i];
    if (std::abs(a - f) > 1e-6) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("gradients vanish at a zero-loss configuration") {
  auto mdp = make_keyhole(keyhole_spec(2, 2));
  const PolicyTable ref = make_uniform_reference(*mdp);
  const double beta = 0.5;
  const OracleResult oracle = soft_backward_induction(*mdp, ref, beta);
  const OfflineDataset all = enumerate_dataset(*mdp);

  TrainConfig cfg;
  cfg.beta = beta;
  cfg.alpha = 0.0;
  cfg.variant = Variant::kToken;
  // Oracle tables only cover reachable states; copy into mutable tables.
  const BatchGradients grads =
      loss_gradients(all.trajectories, oracle.v_star, oracle.pi_star, ref,
                     cfg);
  for (const auto& [k, g] : grads.value.g) CHECK(std::abs(g) <= 1e-12);
  for (const auto& [k, row] : grads.policy.g)
    for (double g : row) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("random-configuration gradient sweep") {
  // Condensed replica of the acceptance sweep (full version lives there).
  int checked = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng(derive_seed(2024, "grad-sweep", trial));
    const TreeMdp tree = TreeMdp::random(rng, 3, 3);
    const PolicyTable ref = testing::random_policy(tree, rng);
    PolicyTable pi = testing::random_policy(tree, rng);
    ValueTable v = testing::random_value(tree, rng);
    const OfflineDataset all = enumerate_dataset(tree);

    TrainConfig cfg;
    cfg.beta = trial % 2 == 0 ? 0.1 : 1.0;
    cfg.alpha = trial % 3 == 0 ? 0.0 : 0.02;
    cfg.variant = static_cast<Variant>(trial % 3);
    const BatchGradients grads =
        loss_gradients(all.trajectories, v, pi, ref, cfg);

    std::vector<testing::FrozenTails> tails;
    for (const Trajectory& t : all.trajectories)
      tails.push_back(
          testing::freeze_tails(t, pi, ref, cfg.beta, cfg.variant));
    const auto policy_fd = testing::fd_policy_gradient(pi, [&] {
      double acc = 0.0;
      for (std::size_t i = 0; i < all.size(); ++i)
        acc += testing::policy_loss_frozen(all.trajectories[i], v, pi, ref,
                                           cfg.beta, cfg.alpha, cfg.variant,
                                           tails[i]);
      return acc / static_cast<double>(all.size());
    });
    CHECK(testing::compare_policy_grads(grads.policy, policy_fd).ok);
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("sft_loss") {
  auto mdp = make_keyhole(keyhole_spec(2, 3));
  const State s0 = mdp->initial_states()[0];
  const PolicyTable ref = make_uniform_reference(*mdp);
  const Trajectory traj = manual_traj(*mdp, s0, {1, 1, 1});

  SUBCASE("uniform policy over two tokens gives log 2") {
    CHECK(sft_loss(traj, ref) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("a deterministic matching policy gives zero") {
    PolicyTable det;
    for (const State& s : enumerate_states(*mdp)) {
      if (s.terminal) continue;
      det.define_state(s, mdp->legal_actions(s),
                       {-std::numeric_limits<double>::infinity(), 0.0});
    }
    CHECK(sft_loss(traj, det) == 0.0);
  }

  SUBCASE("non-negative on random policies") {
    Rng rng(10);
    for (int i = 0; i < 20; ++i) {
      const PolicyTable pi = testing::random_policy(*mdp, rng);
      CHECK(sft_loss(traj, pi) >= 0.0);
    }
  }
}
