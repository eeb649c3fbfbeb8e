#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "oreo/types.hpp"

namespace oreo {

inline constexpr std::size_t kDefaultStateCap = 2'000'000;
inline constexpr std::size_t kDefaultTrajectoryCap = 4'000'000;

// Deterministic token-level task MDP over a finite reachable state set.
// transition/reward validate their preconditions (non-terminal source,
// legal action) before delegating to the derived class.
class TaskMdp {
 public:
  virtual ~TaskMdp() = default;

  virtual int vocab_size() const = 0;

  /// Hard cap on the number of actions in any rollout.
  virtual int horizon() const = 0;

  /// One initial state per task instance.
  virtual std::vector<State> initial_states() const = 0;

  /// Legal actions in ascending token order; empty iff `s` is terminal.
  virtual std::vector<Action> legal_actions(const State& s) const = 0;

  /// True when transitions append environment observation tokens after the
  /// action token (agent-style tasks with dynamics unknown to a searcher).
  virtual bool has_observations() const { return false; }

  State transition(const State& s, Action a) const;
  double reward(const State& s, Action a) const;

 protected:
  virtual State do_transition(const State& s, Action a) const = 0;
  virtual double do_reward(const State& s, Action a) const = 0;

  void check_preconditions(const State& s, Action a) const;
};

/// All states reachable from the initial states (terminal ones included),
/// in deterministic BFS order. Throws ResourceError beyond `cap`.
std::vector<State> enumerate_states(const TaskMdp& mdp,
                                    std::size_t cap = kDefaultStateCap);

/// Checks transition consistency, sparse reward placement, and a terminal
/// final state. Throws ContractError with the first violation found.
void validate_trajectory(const TaskMdp& mdp, const Trajectory& traj);

/// output[t] = sum of rewards from step t to the end of the trajectory.
std::vector<double> suffix_returns(const Trajectory& traj);

/// Half-open [begin, end) ranges of trajectory steps forming one reasoning
/// step each, derived from boundary-marker growth between consecutive
/// states. Throws ContractError if the trajectory carries no markers.
std::vector<std::pair<std::size_t, std::size_t>> step_segments(
    const Trajectory& traj);

}  // namespace oreo
