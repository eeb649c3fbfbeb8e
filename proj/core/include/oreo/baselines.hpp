#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oreo/dataset.hpp"
#include "oreo/losses.hpp"
#include "oreo/trainer.hpp"

namespace oreo {

/// Winner/loser trajectory pair from the same task instance; the winner's
/// terminal reward is strictly greater. Indices reference the source
/// dataset's trajectory order.
struct PreferencePair {
  int task = 0;
  std::size_t winner_index = 0;
  std::size_t loser_index = 0;
  Trajectory winner;
  Trajectory loser;
};

inline constexpr int kDefaultPairCap = 6;

/// Per task, up to `max_pairs_per_task` pairs sampled uniformly without
/// replacement from the positive x negative cross product; tasks visited in
/// ascending key order. Tasks lacking either class contribute no pairs.
std::vector<PreferencePair> make_preference_pairs(
    const OfflineDataset& dataset, int max_pairs_per_task, std::uint64_t seed);

/// Bradley-Terry win probability exp(rw) / (exp(rw) + exp(rl)), evaluated
/// as a stable sigmoid of the margin.
double bt_probability(double reward_w, double reward_l);

/// -log sigma(beta * (winner summed log-ratio - loser summed log-ratio)).
double dpo_loss(const PreferencePair& pair, const PolicyTable& pi,
                const PolicyTable& ref, double beta);

/// d dpo_loss / d logits for one pair, accumulated into `out`.
void accumulate_dpo_gradient(const PreferencePair& pair, const PolicyTable& pi,
                             const PolicyTable& ref, double beta, double scale,
                             PolicyGrad& out);

/// Supervised training on the reward-1 subset only; the returned value table
/// stays identically zero. TrainingError if the dataset has no positives.
TrainedModel rejection_sampling_train(const OfflineDataset& dataset,
                                      const TaskMdp& mdp,
                                      const PolicyTable& ref,
                                      const TrainConfig& cfg);

/// Supervised training on every trajectory (the SFT baseline).
TrainedModel sft_train(const OfflineDataset& dataset, const TaskMdp& mdp,
                       const PolicyTable& ref, const TrainConfig& cfg);

/// Gradient descent on the mean dpo_loss from pi := ref; the value table
/// stays identically zero.
TrainedModel dpo_train(std::span<const PreferencePair> pairs,
                       const TaskMdp& mdp, const PolicyTable& ref,
                       const TrainConfig& cfg);

/// Mean (winner - loser) summed log-ratio margin over `pairs`.
double mean_pair_margin(std::span<const PreferencePair> pairs,
                        const PolicyTable& pi, const PolicyTable& ref);

/// JSONL: {"task": ..., "winner": <index>, "loser": <index>} per line,
/// referencing records of the dataset the pairs were built from.
std::string pairs_to_jsonl(std::span<const PreferencePair> pairs);
std::vector<PreferencePair> parse_pairs_jsonl(const OfflineDataset& dataset,
                                              std::string_view text);

}  // namespace oreo
