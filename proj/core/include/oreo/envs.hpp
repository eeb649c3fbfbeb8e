#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "oreo/dataset.hpp"
#include "oreo/mdp.hpp"
#include "oreo/rng.hpp"
#include "oreo/tables.hpp"

namespace oreo {

enum class EnvFamily { kDigitChain, kKeyhole, kGridworld };

EnvFamily env_family_from_string(const std::string& name);
std::string to_string(EnvFamily family);

// Declarative description of a task family instance set. Fields not used by
// a family are ignored by its factory.
struct EnvSpec {
  EnvFamily family = EnvFamily::kKeyhole;
  int vocab = 2;
  int depth = 1;        // reasoning steps (digit-chain, keyhole)
  int horizon = 0;      // max actions per episode (gridworld; 0 = derived)
  int instances = 1;    // number of task instances

  // digit-chain
  int modulus = 0;          // 0 = vocab
  int tokens_per_step = 1;  // free scratch tokens + 1 checked token per step

  // keyhole
  int key_position = 0;
  TokenId key_token = 1;

  // gridworld
  int grid_width = 3;
  int grid_height = 1;
  int goal_cell = -1;   // -1 = last cell
  int start_cell = 0;

  double reward_scale = 1.0;  // scales the terminal reward (0 = unrewarded)
  std::size_t enumeration_cap = kDefaultStateCap;
};

/// Arithmetic-chain task: the prompt encodes two residues (a, b) and the
/// rewarded continuation emits the running sums (a + j*b) mod m, one
/// reasoning step per sum. With tokens_per_step == 1 exactly one leaf per
/// instance is rewarded.
std::unique_ptr<TaskMdp> make_digit_chain(const EnvSpec& spec);

/// Free-generation task whose reward depends on a single key position:
/// reward 1 iff the token generated at `key_position` equals `key_token`.
std::unique_ptr<TaskMdp> make_keyhole(const EnvSpec& spec);

/// Agent task on a bounded grid: single-token movement actions, one
/// observation token (the new cell) appended after each action, walls leave
/// the position unchanged, reward 1 on entering the goal cell.
std::unique_ptr<TaskMdp> make_gridworld(const EnvSpec& spec);

std::unique_ptr<TaskMdp> make_env(const EnvSpec& spec);

/// `n_per_task` rollouts per task instance under `behavior`; deterministic
/// given the seed and independent of instance scheduling order.
OfflineDataset generate_offline_dataset(const TaskMdp& mdp,
                                        const PolicyTable& behavior,
                                        int n_per_task, std::uint64_t seed);

/// One trajectory per leaf of every task instance (full coverage).
OfflineDataset enumerate_dataset(const TaskMdp& mdp,
                                 std::size_t cap = kDefaultTrajectoryCap);

/// Optional positive/negative balancing filter: per task keeps at most
/// `max_per_class` of each class, never more positives than negatives, and
/// at least one positive when any exists. Off by default in every pipeline.
OfflineDataset balance_dataset(const OfflineDataset& dataset,
                               int max_per_class, std::uint64_t seed);

/// Single rollout from `s0` sampling actions from `behavior`.
Trajectory rollout(const TaskMdp& mdp, const PolicyTable& behavior,
                   const State& s0, Rng& rng);

}  // namespace oreo
