#include "oreo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include <nlohmann/json.hpp>

#include "oreo/envs.hpp"
#include "oreo/errors.hpp"
#include "oreo/inference.hpp"
#include "oreo/oracle.hpp"
#include "oreo/rng.hpp"

namespace oreo {

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("train: beta must be > 0");
  if (alpha < 0.0) throw ConfigError("train: alpha must be >= 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
  if (!(policy_lr >= 0.0) || !(value_lr >= 0.0))
    throw ConfigError("train: learning rates must be >= 0");
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig cfg;
  cfg.beta = 0.03;
  cfg.alpha = 0.01;
  return cfg;
}

// ---------------------------------------------------------------------------
// optimizer

TableOptimizer::TableOptimizer(const TrainConfig& cfg)
    : kind_(cfg.optimizer),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {}

void TableOptimizer::apply(ValueTable& value, const ValueGrad& grad,
                           double lr) {
  if (kind_ == OptimizerKind::kSgd) {
    for (const auto& [k, g] : grad.g) value.add_key(k, -lr * g);
    return;
  }
  ++t_value_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_value_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_value_));
  for (const auto& [k, g] : grad.g) {
    double& m = value_m_[k];
    double& v = value_v_[k];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    value.add_key(k, -lr * (m / c1) / (std::sqrt(v / c2) + eps_));
  }
}

void TableOptimizer::apply(PolicyTable& policy, const PolicyGrad& grad,
                           double lr) {
  if (kind_ == OptimizerKind::kSgd) {
    for (const auto& [k, g] : grad.g) {
      auto& logits = policy.logits_mut(k);
      for (std::size_t i = 0; i < g.size(); ++i) logits[i] -= lr * g[i];
    }
    return;
  }
  ++t_policy_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_policy_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_policy_));
  for (const auto& [k, g] : grad.g) {
    auto [mit, fresh] = policy_m_.try_emplace(k);
    if (fresh) mit->second.assign(g.size(), 0.0);
    auto [vit, fresh2] = policy_v_.try_emplace(k);
    if (fresh2) vit->second.assign(g.size(), 0.0);
    auto& logits = policy.logits_mut(k);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& m = mit->second[i];
      double& v = vit->second[i];
      m = beta1_ * m + (1.0 - beta1_) * g[i];
      v = beta2_ * v + (1.0 - beta2_) * g[i] * g[i];
      logits[i] -= lr * (m / c1) / (std::sqrt(v / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// batch gradients

namespace {

struct TrajGrads {
  ValueGrad value;
  PolicyGrad policy;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

TrajGrads trajectory_gradients(const Trajectory& traj, const ValueTable& value,
                               const PolicyTable& pi, const PolicyTable& ref,
                               const TrainConfig& cfg) {
  TrajGrads out;
  out.value_loss = value_loss(traj, value, pi, ref, cfg.beta);
  switch (cfg.variant) {
    case Variant::kToken:
      out.policy_loss =
          policy_loss_token(traj, value, pi, ref, cfg.beta, cfg.alpha);
      break;
    case Variant::kStep:
      out.policy_loss =
          policy_loss_step(traj, value, pi, ref, cfg.beta, cfg.alpha);
      break;
    case Variant::kResponse:
      out.policy_loss =
          policy_loss_response(traj, value, pi, ref, cfg.beta, cfg.alpha);
      break;
  }
  accumulate_value_gradient(traj, value, pi, ref, cfg.beta, 1.0, out.value);
  accumulate_policy_gradient(traj, value, pi, ref, cfg.beta, cfg.alpha,
                             cfg.variant, 1.0, out.policy);
  return out;
}

BatchGradients reduce_gradients(std::span<const Trajectory* const> batch,
                                const ValueTable& value, const PolicyTable& pi,
                                const PolicyTable& ref,
                                const TrainConfig& cfg) {
  const std::size_t n = batch.size();
  std::vector<TrajGrads> parts(n);
  const int workers =
      std::min<int>(cfg.threads, static_cast<int>(n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      parts[i] = trajectory_gradients(*batch[i], value, pi, ref, cfg);
  } else {
    // Parallel map over trajectories; the reduction below stays sequential
    // in trajectory order, so results are identical for any worker count.
    std::vector<std::future<void>> jobs;
    jobs.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < n;
             i += static_cast<std::size_t>(workers))
          parts[i] = trajectory_gradients(*batch[i], value, pi, ref, cfg);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  BatchGradients out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (const TrajGrads& part : parts) {
    out.value.accumulate(part.value, inv_n);
    out.policy.accumulate(part.policy, inv_n);
    out.value_loss += inv_n * part.value_loss;
    out.policy_loss += inv_n * part.policy_loss;
  }
  return out;
}

}  // namespace

BatchGradients loss_gradients(std::span<const Trajectory> batch,
                              const ValueTable& value, const PolicyTable& pi,
                              const PolicyTable& ref, const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("loss_gradients: empty batch");
  cfg.validate();
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(batch.size());
  for (const Trajectory& t : batch) ptrs.push_back(&t);
  return reduce_gradients(ptrs, value, pi, ref, cfg);
}

// ---------------------------------------------------------------------------
// training loop

namespace {

double residual_over_states(std::span<const State> states,
                            const PolicyTable& pi, const ValueTable& value,
                            const TaskMdp& mdp, const PolicyTable& ref,
                            double beta) {
  double worst = 0.0;
  for (const State& s : states) {
    if (s.terminal) continue;
    const double vs = value.value(s);
    for (Action a : mdp.legal_actions(s)) {
      const double res = vs - value.value(mdp.transition(s, a)) -
                         mdp.reward(s, a) + beta * log_ratio(pi, ref, s, a);
      worst = std::max(worst, std::abs(res));
    }
  }
  return worst;
}

double mean_kl_over_states(std::span<const State> states,
                           const PolicyTable& pi, const PolicyTable& ref) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const State& s : states) {
    if (s.terminal) continue;
    acc += kl_to_reference(pi, ref, s);
    ++n;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace

TrainedModel train_from(const OfflineDataset& dataset, const TaskMdp& mdp,
                        const PolicyTable& ref, const TrainConfig& cfg,
                        PolicyTable init_policy, ValueTable init_value) {
  cfg.validate();
  if (dataset.empty()) throw ContractError("train: dataset is empty");

  const std::vector<State> states = enumerate_states(mdp, cfg.state_cap);
  TrainedModel model{std::move(init_policy), std::move(init_value), {}};
  TableOptimizer value_opt(cfg);
  TableOptimizer policy_opt(cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle"));

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  auto record = [&](int step, double vloss, double ploss, bool with_eval) {
    MetricsRecord rec;
    rec.step = step;
    rec.value_loss = vloss;
    rec.policy_loss = ploss;
    rec.mean_kl = mean_kl_over_states(states, model.policy, ref);
    rec.max_residual = residual_over_states(states, model.policy, model.value,
                                            mdp, ref, cfg.beta);
    if (with_eval) rec.success_rate = greedy_success_rate(model.policy, mdp);
    model.history.push_back(rec);
  };

  int step = 0;
  double last_vloss = 0.0;
  double last_ploss = 0.0;
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    // Fisher-Yates with our own rng so the visit order is reproducible.
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    for (std::size_t begin = 0; begin < n && !done;
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Trajectory*> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back(&dataset.trajectories[order[i]]);

      BatchGradients grads =
          reduce_gradients(batch, model.value, model.policy, ref, cfg);
      if (!std::isfinite(grads.value_loss) ||
          !std::isfinite(grads.policy_loss))
        throw TrainingError("training diverged at step " +
                            std::to_string(step));
      if (cfg.alternating) {
        value_opt.apply(model.value, grads.value, cfg.value_lr);
        const BatchGradients refreshed =
            reduce_gradients(batch, model.value, model.policy, ref, cfg);
        policy_opt.apply(model.policy, refreshed.policy, cfg.policy_lr);
      } else {
        value_opt.apply(model.value, grads.value, cfg.value_lr);
        policy_opt.apply(model.policy, grads.policy, cfg.policy_lr);
      }
      ++step;
      last_vloss = grads.value_loss;
      last_ploss = grads.policy_loss;
      if (cfg.log_every > 0 && step % cfg.log_every == 0)
        record(step, last_vloss, last_ploss,
               cfg.eval_every > 0 && step % cfg.eval_every == 0);
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
  }
  if (model.history.empty() || model.history.back().step != step)
    record(step, last_vloss, last_ploss, cfg.eval_every > 0);

  augment_with_afterstates(model.value, mdp, cfg.state_cap);
  return model;
}

TrainedModel train(const OfflineDataset& dataset, const TaskMdp& mdp,
                   const PolicyTable& ref, const TrainConfig& cfg) {
  cfg.validate();
  ValueTable value;
  PolicyTable policy;
  for (const State& s : enumerate_states(mdp, cfg.state_cap)) {
    if (s.terminal) continue;
    value.set(s, 0.0);
    const PolicyTable::Entry& e = ref.entry(s);  // ref must cover the space
    policy.define_state(s, e.actions, e.logits);
  }
  return train_from(dataset, mdp, ref, cfg, std::move(policy),
                    std::move(value));
}

std::vector<RoundResult> run_iterations(const TaskMdp& mdp,
                                        const PolicyTable& ref,
                                        const TrainConfig& cfg, int rounds,
                                        int n_per_task,
                                        const TrainerFn& trainer) {
  if (rounds < 1) throw ConfigError("run_iterations: rounds must be >= 1");
  const TrainerFn fn =
      trainer ? trainer
              : [](const OfflineDataset& d, const TaskMdp& m,
                   const PolicyTable& r, const TrainConfig& c) {
                  return train(d, m, r, c);
                };
  std::vector<RoundResult> out;
  out.reserve(static_cast<std::size_t>(rounds));
  for (int round = 0; round < rounds; ++round) {
    const PolicyTable& behavior =
        round == 0 ? ref : out.back().model.policy;
    OfflineDataset dataset = generate_offline_dataset(
        mdp, behavior, n_per_task,
        derive_seed(cfg.seed, "iterate.data", static_cast<std::uint64_t>(round)));
    TrainConfig round_cfg = cfg;
    round_cfg.seed =
        derive_seed(cfg.seed, "iterate.train", static_cast<std::uint64_t>(round));
    TrainedModel model = fn(dataset, mdp, ref, round_cfg);
    RoundResult result;
    result.positive_fraction = dataset.positive_fraction();
    result.greedy_success = greedy_success_rate(model.policy, mdp);
    result.model = std::move(model);
    result.dataset = std::move(dataset);
    out.push_back(std::move(result));
  }
  return out;
}

void augment_with_afterstates(ValueTable& value, const TaskMdp& mdp,
                              std::size_t cap) {
  for (const State& s : enumerate_states(mdp, cap)) {
    if (s.terminal) continue;
    for (Action a : mdp.legal_actions(s)) {
      const State next = mdp.transition(s, a);
      StateKey key = s.tokens;
      key.push_back(a.token);
      if (key == next.tokens) continue;  // no observation: key is a state
      value.set_key(key, mdp.reward(s, a) + value.value(next));
    }
  }
}

double greedy_success_rate(const PolicyTable& policy, const TaskMdp& mdp) {
  const auto initial = mdp.initial_states();
  std::size_t successes = 0;
  for (const State& s0 : initial) {
    const Trajectory traj = greedy_decode(policy, mdp, s0);
    if (traj.terminal_reward() > 0.0) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(initial.size());
}

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& history) {
  std::string out;
  for (const MetricsRecord& rec : history) {
    nlohmann::ordered_json j;
    j["step"] = rec.step;
    j["value_loss"] = rec.value_loss;
    j["policy_loss"] = rec.policy_loss;
    j["mean_kl"] = rec.mean_kl;
    j["max_residual"] = rec.max_residual;
    if (rec.success_rate) j["success_rate"] = *rec.success_rate;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace oreo
