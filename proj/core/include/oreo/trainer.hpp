#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oreo/dataset.hpp"
#include "oreo/losses.hpp"
#include "oreo/mdp.hpp"
#include "oreo/tables.hpp"

namespace oreo {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  double beta = 0.5;
  double alpha = 0.01;
  double policy_lr = 0.1;
  double value_lr = 0.5;
  int epochs = 1;
  int batch_size = 16;
  int max_steps = 0;  // 0 = bounded by epochs only
  Variant variant = Variant::kToken;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Alternating mode refreshes the policy gradient against the just-updated
  // value table instead of stepping both tables from the same snapshot.
  bool alternating = false;
  int log_every = 100;
  int eval_every = 0;  // greedy success-rate probes; 0 = never
  int threads = 1;
  std::size_t state_cap = kDefaultStateCap;

  void validate() const;

  /// beta/alpha operating point used in the large-scale experiments.
  static TrainConfig paper_preset();
};

struct MetricsRecord {
  int step = 0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double mean_kl = 0.0;
  double max_residual = 0.0;
  std::optional<double> success_rate;
};

// Applies sparse gradients to the tables, either plain SGD or lazy
// Adam-style moments kept per touched entry.
class TableOptimizer {
 public:
  explicit TableOptimizer(const TrainConfig& cfg);

  void apply(ValueTable& value, const ValueGrad& grad, double lr);
  void apply(PolicyTable& policy, const PolicyGrad& grad, double lr);

 private:
  OptimizerKind kind_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_value_ = 0;
  long t_policy_ = 0;
  std::unordered_map<StateKey, double, StateKeyHash> value_m_, value_v_;
  std::unordered_map<StateKey, std::vector<double>, StateKeyHash> policy_m_,
      policy_v_;
};

struct TrainedModel {
  PolicyTable policy;
  ValueTable value;
  std::vector<MetricsRecord> history;
};

/// Mean-loss gradients over a trajectory batch: the value gradient of the
/// value loss (policy held constant) and the policy gradient of the
/// variant's policy loss (value table and stop-gradient sums held constant).
struct BatchGradients {
  ValueGrad value;
  PolicyGrad policy;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

BatchGradients loss_gradients(std::span<const Trajectory> batch,
                              const ValueTable& value, const PolicyTable& pi,
                              const PolicyTable& ref, const TrainConfig& cfg);

/// Joint policy/value training from pi := ref (logit copy) and V identically
/// zero on every reachable non-terminal state. Deterministic given the seed.
TrainedModel train(const OfflineDataset& dataset, const TaskMdp& mdp,
                   const PolicyTable& ref, const TrainConfig& cfg);

/// Same loop, but starting from explicit tables (e.g. an oracle solution).
TrainedModel train_from(const OfflineDataset& dataset, const TaskMdp& mdp,
                        const PolicyTable& ref, const TrainConfig& cfg,
                        PolicyTable init_policy, ValueTable init_value);

using TrainerFn = std::function<TrainedModel(
    const OfflineDataset&, const TaskMdp&, const PolicyTable&,
    const TrainConfig&)>;

struct RoundResult {
  TrainedModel model;
  OfflineDataset dataset;
  double positive_fraction = 0.0;
  double greedy_success = 0.0;
};

/// Iterative training: round k samples a fresh dataset with the round-(k-1)
/// policy (round 0 uses the reference), trains from scratch on it, and
/// records the greedy success rate. `trainer` defaults to `train`.
std::vector<RoundResult> run_iterations(const TaskMdp& mdp,
                                        const PolicyTable& ref,
                                        const TrainConfig& cfg, int rounds,
                                        int n_per_task,
                                        const TrainerFn& trainer = {});

/// Writes V(s || a) := r(s, a) + V(s') for every reachable (s, a) whose
/// action-appended key is not itself a state (observation environments).
/// Gives the value table entries for querying an action's value before the
/// environment responds, mirroring how a learned critic scores a pending
/// action without knowing the dynamics.
void augment_with_afterstates(ValueTable& value, const TaskMdp& mdp,
                              std::size_t cap = kDefaultStateCap);

/// Greedy success rate of `policy` over all task instances.
double greedy_success_rate(const PolicyTable& policy, const TaskMdp& mdp);

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& history);

}  // namespace oreo
