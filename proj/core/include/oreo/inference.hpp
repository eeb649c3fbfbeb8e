#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oreo/mdp.hpp"
#include "oreo/rng.hpp"
#include "oreo/tables.hpp"

namespace oreo {

/// Argmax-probability rollout from `s0`; ties go to the lowest action token.
Trajectory greedy_decode(const PolicyTable& pi, const TaskMdp& mdp,
                         const State& s0);

// Step-level beam search guided by the value table. Each round every
// unfinished candidate proposes up to `beam_width` next reasoning steps
// (sampled from the policy without replacement when the step space is
// enumerable, otherwise with replacement plus dedup); of the pooled
// candidates the `beam_width` highest-value ones survive. Finished
// candidates freeze their score at V(last state before terminal) plus
// collected reward and keep competing. Ties everywhere resolve to the
// earlier candidate, so a run is fully determined by `rng`.
Trajectory beam_search(const PolicyTable& pi, const ValueTable& value,
                       const TaskMdp& mdp, const State& s0, int beam_width,
                       Rng& rng);

/// Samples `k` actions from pi(.|s) with replacement and returns the one
/// whose action-appended state (before any observation) the value table
/// scores highest; first-sampled wins ties.
Action best_of_k(const PolicyTable& pi, const ValueTable& value,
                 const TaskMdp& mdp, const State& s, int k, Rng& rng);

/// A_phi = V(s_j) - V(s_i).
double advantage_explicit(const ValueTable& value, const State& s_i,
                          const State& s_j);

/// A_theta = sum_{t=i}^{j-1} beta * log(pi(a_t|s_t)/ref(a_t|s_t)) over a
/// trajectory segment of state indices [i, j].
double advantage_implicit(const PolicyTable& pi, const PolicyTable& ref,
                          const Trajectory& traj, std::size_t i, std::size_t j,
                          double beta);

struct AdvantageReport {
  std::size_t from = 0;
  std::size_t to = 0;
  double a_explicit = 0.0;
  double a_implicit = 0.0;
};

AdvantageReport advantage_report(const Trajectory& traj,
                                 const ValueTable& value,
                                 const PolicyTable& pi, const PolicyTable& ref,
                                 double beta, std::size_t i, std::size_t j);

enum class EvalMode { kGreedy, kBeam, kBestOfK };

std::string to_string(EvalMode mode);

struct EvalReport {
  EvalMode mode = EvalMode::kGreedy;
  int b_or_k = 0;
  int episodes = 0;
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double mean_length = 0.0;
  std::uint64_t seed = 0;
};

/// Runs `episodes` rollouts cycling over task instances. `value` may be
/// null for greedy mode only. Deterministic given the seed.
EvalReport evaluate(const PolicyTable& pi, const ValueTable* value,
                    const TaskMdp& mdp, EvalMode mode, int b_or_k,
                    int episodes, std::uint64_t seed);

/// One JSONL line: {mode, B_or_K, episodes, success_rate, mean_reward,
/// mean_length, seed}.
std::string eval_report_to_jsonl(const EvalReport& report);

}  // namespace oreo
