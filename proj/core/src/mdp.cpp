#include "oreo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_set>

#include "oreo/errors.hpp"

namespace oreo {

void TaskMdp::check_preconditions(const State& s, Action a) const {
  if (s.terminal)
    throw ContractError("transition from terminal state [" +
                        format_tokens(s.tokens) + "]");
  const auto legal = legal_actions(s);
  if (std::find(legal.begin(), legal.end(), a) == legal.end())
    throw DomainError("action " + std::to_string(a.token) +
                      " is not legal in state [" + format_tokens(s.tokens) +
                      "]");
}

State TaskMdp::transition(const State& s, Action a) const {
  check_preconditions(s, a);
  return do_transition(s, a);
}

double TaskMdp::reward(const State& s, Action a) const {
  check_preconditions(s, a);
  return do_reward(s, a);
}

std::vector<State> enumerate_states(const TaskMdp& mdp, std::size_t cap) {
  std::vector<State> out;
  std::unordered_set<StateKey, StateKeyHash> seen;
  std::deque<State> frontier;
  for (const State& s0 : mdp.initial_states()) {
    if (seen.insert(s0.tokens).second) frontier.push_back(s0);
  }
  while (!frontier.empty()) {
    State s = std::move(frontier.front());
    frontier.pop_front();
    if (out.size() >= cap)
      throw ResourceError("enumerate_states: state cap " +
                          std::to_string(cap) + " exceeded");
    out.push_back(s);
    if (s.terminal) continue;
    for (Action a : mdp.legal_actions(s)) {
      State next = mdp.transition(s, a);
      if (seen.insert(next.tokens).second) frontier.push_back(std::move(next));
    }
  }
  return out;
}

void validate_trajectory(const TaskMdp& mdp, const Trajectory& traj) {
  if (traj.steps.empty())
    throw ContractError("trajectory has no steps");
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const TrajStep& step = traj.steps[t];
    if (step.state.terminal)
      throw ContractError("non-final trajectory state is terminal at step " +
                          std::to_string(t));
    const State next = mdp.transition(step.state, step.action);
    const State& recorded =
        t + 1 < traj.steps.size() ? traj.steps[t + 1].state : traj.final_state;
    if (!(next == recorded) || next.terminal != recorded.terminal)
      throw ContractError("successor mismatch at step " + std::to_string(t));
    const double r = mdp.reward(step.state, step.action);
    if (r != step.reward)
      throw ContractError("reward mismatch at step " + std::to_string(t));
    if (t + 1 < traj.steps.size() && step.reward != 0.0)
      throw ContractError("non-terminal reward at step " + std::to_string(t));
  }
  if (!traj.final_state.terminal)
    throw ContractError("final state is not terminal");
}

std::vector<double> suffix_returns(const Trajectory& traj) {
  std::vector<double> out(traj.steps.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    acc += traj.steps[i].reward;
    out[i] = acc;
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> step_segments(
    const Trajectory& traj) {
  const std::size_t n = traj.steps.size();
  if (n == 0) throw ContractError("step_segments: empty trajectory");
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t begin = 0;
  bool any_marker = false;
  for (std::size_t t = 0; t < n; ++t) {
    const State& next =
        t + 1 < n ? traj.steps[t + 1].state : traj.final_state;
    if (next.boundaries.size() > traj.steps[t].state.boundaries.size()) {
      segments.emplace_back(begin, t + 1);
      begin = t + 1;
      any_marker = true;
    }
  }
  if (!any_marker)
    throw ContractError("step_segments: trajectory carries no step markers");
  if (begin < n) segments.emplace_back(begin, n);
  return segments;
}

}  // namespace oreo
