#include "oreo/oracle.hpp"

#include <cmath>
#include <string>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"

namespace oreo {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw ConfigError("beta must be a positive finite real, got " +
                      std::to_string(beta));
}

// Reference log-probs for the full legal-action set of `s`, with the
// support check the induction relies on.
std::vector<double> ref_log_probs(const PolicyTable& ref, const State& s,
                                  const std::vector<Action>& legal) {
  const PolicyTable::Entry& e = ref.entry(s);
  if (e.actions != legal)
    throw ContractError(
        "reference policy action set does not match legal_actions in state [" +
        format_tokens(s.tokens) + "]");
  std::vector<double> lq = log_softmax(e.logits);
  for (std::size_t i = 0; i < lq.size(); ++i) {
    if (!(lq[i] > kLogFloor))
      throw SupportError("reference policy has a support hole on action " +
                         std::to_string(legal[i].token) + " in state [" +
                         format_tokens(s.tokens) + "]");
  }
  return lq;
}

struct InductionContext {
  const TaskMdp& mdp;
  const PolicyTable& ref;
  double beta;
  std::size_t state_cap;
  OracleResult result;
  std::unordered_map<StateKey, double, StateKeyHash> memo;

  double visit(const State& s) {
    if (s.terminal) return 0.0;
    if (auto it = memo.find(s.tokens); it != memo.end()) return it->second;
    if (memo.size() >= state_cap)
      throw ResourceError("soft_backward_induction: state cap " +
                          std::to_string(state_cap) + " exceeded");
    const auto legal = mdp.legal_actions(s);
    const auto lq = ref_log_probs(ref, s, legal);
    std::vector<double> q(legal.size());
    std::vector<double> scaled(legal.size());
    for (std::size_t i = 0; i < legal.size(); ++i) {
      const State next = mdp.transition(s, legal[i]);
      q[i] = mdp.reward(s, legal[i]) + beta * lq[i] + visit(next);
      scaled[i] = q[i] / beta;
    }
    const double v = beta * log_sum_exp(scaled);
    memo.emplace(s.tokens, v);
    result.v_star.set(s, v);
    // Softmax of Q/beta is exp((Q - V)/beta), so Q/beta doubles as the
    // optimal policy's logits.
    result.pi_star.define_state(s, legal, scaled);
    result.q_star.emplace(s.tokens, std::move(q));
    return v;
  }
};

}  // namespace

double OracleResult::q_at(const State& s, Action a) const {
  auto it = q_star.find(s.tokens);
  if (it == q_star.end())
    throw ContractError("OracleResult: unknown state [" +
                        format_tokens(s.tokens) + "]");
  return it->second[pi_star.action_index(s, a)];
}

OracleResult soft_backward_induction(const TaskMdp& mdp,
                                     const PolicyTable& ref, double beta,
                                     std::size_t state_cap) {
  check_beta(beta);
  InductionContext ctx{mdp, ref, beta, state_cap, OracleResult{}, {}};
  ctx.result.beta = beta;
  for (const State& s0 : mdp.initial_states()) ctx.visit(s0);
  return std::move(ctx.result);
}

namespace {

void enumerate_leaves(const TaskMdp& mdp, const PolicyTable& ref, double beta,
                      const State& s, double log_ref_acc, double reward_acc,
                      std::size_t traj_cap, std::size_t& count,
                      std::vector<double>& leaf_terms) {
  if (s.terminal) {
    if (++count > traj_cap)
      throw ResourceError("brute_force_soft_value: trajectory cap " +
                          std::to_string(traj_cap) + " exceeded");
    leaf_terms.push_back(log_ref_acc + reward_acc / beta);
    return;
  }
  const auto legal = mdp.legal_actions(s);
  const auto lq = ref_log_probs(ref, s, legal);
  for (std::size_t i = 0; i < legal.size(); ++i) {
    enumerate_leaves(mdp, ref, beta, mdp.transition(s, legal[i]),
                     log_ref_acc + lq[i],
                     reward_acc + mdp.reward(s, legal[i]), traj_cap, count,
                     leaf_terms);
  }
}

}  // namespace

double brute_force_soft_value(const TaskMdp& mdp, const PolicyTable& ref,
                              double beta, const State& s,
                              std::size_t traj_cap) {
  check_beta(beta);
  if (s.terminal) return 0.0;
  std::vector<double> leaf_terms;
  std::size_t count = 0;
  enumerate_leaves(mdp, ref, beta, s, 0.0, 0.0, traj_cap, count, leaf_terms);
  return beta * log_sum_exp(leaf_terms);
}

double bellman_residual(const PolicyTable& pi, const ValueTable& v,
                        const TaskMdp& mdp, const PolicyTable& ref,
                        double beta, std::size_t state_cap) {
  check_beta(beta);
  double worst = 0.0;
  for (const State& s : enumerate_states(mdp, state_cap)) {
    if (s.terminal) continue;
    const double vs = v.value(s);
    for (Action a : mdp.legal_actions(s)) {
      const State next = mdp.transition(s, a);
      const double residual = vs - v.value(next) - mdp.reward(s, a) +
                              beta * log_ratio(pi, ref, s, a);
      if (!std::isfinite(residual))
        throw NumericError("bellman_residual: non-finite residual in state [" +
                           format_tokens(s.tokens) + "]");
      worst = std::max(worst, std::abs(residual));
    }
  }
  return worst;
}

}  // namespace oreo
