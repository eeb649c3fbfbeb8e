#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oreo/mdp.hpp"
#include "oreo/types.hpp"

namespace oreo {

/// Bag of reward-labeled trajectories. `task_ids` maps each trajectory to
/// the task instance (index into TaskMdp::initial_states) it came from.
struct OfflineDataset {
  std::vector<Trajectory> trajectories;
  std::vector<int> task_ids;

  std::size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
  double positive_fraction() const;
};

/// Validates every trajectory against the MDP and checks that terminal
/// rewards are in {0, 1} with exactly one reward-bearing step.
void validate_dataset(const TaskMdp& mdp, const OfflineDataset& dataset);

// JSONL wire format, one trajectory per line:
//   {"env_id": <int>, "prompt": [int...],
//    "steps": [{"action": [int...], "obs": [int...]}, ...],
//    "reward": <number>}
std::string dataset_to_jsonl(const OfflineDataset& dataset);
OfflineDataset parse_dataset_jsonl(const TaskMdp& mdp, std::string_view text);

void write_dataset_jsonl(const OfflineDataset& dataset,
                         const std::filesystem::path& path);
OfflineDataset read_dataset_jsonl(const TaskMdp& mdp,
                                  const std::filesystem::path& path);

}  // namespace oreo
