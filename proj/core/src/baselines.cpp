#include "oreo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"
#include "oreo/rng.hpp"

namespace oreo {

std::vector<PreferencePair> make_preference_pairs(
    const OfflineDataset& dataset, int max_pairs_per_task,
    std::uint64_t seed) {
  if (max_pairs_per_task < 1)
    throw ConfigError("make_preference_pairs: cap must be >= 1");
  std::vector<int> tasks(dataset.task_ids);
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());

  std::vector<PreferencePair> pairs;
  for (int task : tasks) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.task_ids[i] != task) continue;
      (dataset.trajectories[i].terminal_reward() > 0.0 ? pos : neg)
          .push_back(i);
    }
    if (pos.empty() || neg.empty()) continue;
    const std::size_t cross = pos.size() * neg.size();
    const std::size_t want =
        std::min(cross, static_cast<std::size_t>(max_pairs_per_task));
    Rng rng(derive_seed(seed, "pairs", static_cast<std::uint64_t>(task)));
    for (std::size_t flat : sample_without_replacement(cross, want, rng)) {
      const std::size_t w = pos[flat / neg.size()];
      const std::size_t l = neg[flat % neg.size()];
      pairs.push_back({task, w, l, dataset.trajectories[w],
                       dataset.trajectories[l]});
    }
  }
  return pairs;
}

double bt_probability(double reward_w, double reward_l) {
  if (!std::isfinite(reward_w) || !std::isfinite(reward_l))
    throw ContractError("bt_probability: rewards must be finite");
  return sigmoid(reward_w - reward_l);
}

namespace {

double summed_log_ratio(const Trajectory& traj, const PolicyTable& pi,
                        const PolicyTable& ref) {
  double acc = 0.0;
  for (const TrajStep& step : traj.steps)
    acc += log_ratio(pi, ref, step.state, step.action);
  return acc;
}

}  // namespace

double dpo_loss(const PreferencePair& pair, const PolicyTable& pi,
                const PolicyTable& ref, double beta) {
  if (!(beta > 0.0)) throw ConfigError("dpo_loss: beta must be > 0");
  const double margin = beta * (summed_log_ratio(pair.winner, pi, ref) -
                                summed_log_ratio(pair.loser, pi, ref));
  return -log_sigmoid(margin);
}

void accumulate_dpo_gradient(const PreferencePair& pair, const PolicyTable& pi,
                             const PolicyTable& ref, double beta, double scale,
                             PolicyGrad& out) {
  const double margin = beta * (summed_log_ratio(pair.winner, pi, ref) -
                                summed_log_ratio(pair.loser, pi, ref));
  // d(-log sigma(m))/dm = sigma(m) - 1
  const double dm = sigmoid(margin) - 1.0;
  auto add_side = [&](const Trajectory& traj, double sign) {
    for (const TrajStep& step : traj.steps) {
      const PolicyTable::Entry& e = pi.entry(step.state);
      const std::vector<double> p = softmax(e.logits);
      auto& grow = out.row(step.state.tokens, p.size());
      const double w = scale * dm * sign * beta;
      for (std::size_t b = 0; b < p.size(); ++b) grow[b] -= w * p[b];
      grow[pi.action_index(step.state, step.action)] += w;
    }
  };
  add_side(pair.winner, 1.0);
  add_side(pair.loser, -1.0);
}

double mean_pair_margin(std::span<const PreferencePair> pairs,
                        const PolicyTable& pi, const PolicyTable& ref) {
  if (pairs.empty()) throw ContractError("mean_pair_margin: no pairs");
  double acc = 0.0;
  for (const PreferencePair& pair : pairs)
    acc += summed_log_ratio(pair.winner, pi, ref) -
           summed_log_ratio(pair.loser, pi, ref);
  return acc / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// training loops

namespace {

// Policy-only training shared by SFT-style baselines. `grad_fn` accumulates
// the per-item gradient and returns the item's loss.
template <typename Item, typename LossFn, typename GradFn>
TrainedModel policy_only_train(std::span<const Item> items, const TaskMdp& mdp,
                               const PolicyTable& ref, const TrainConfig& cfg,
                               const LossFn& item_loss, const GradFn& grad_fn) {
  cfg.validate();
  if (items.empty()) throw ContractError("train: no training items");

  TrainedModel model;
  for (const State& s : enumerate_states(mdp, cfg.state_cap)) {
    if (s.terminal) continue;
    model.value.set(s, 0.0);
    const PolicyTable::Entry& e = ref.entry(s);
    model.policy.define_state(s, e.actions, e.logits);
  }

  TableOptimizer opt(cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle"));
  const std::size_t n = items.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  int step = 0;
  double last_loss = 0.0;
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    for (std::size_t begin = 0; begin < n && !done;
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(end - begin);
      PolicyGrad grad;
      double loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const Item& item = items[order[i]];
        loss += inv * item_loss(item, model.policy);
        grad_fn(item, model.policy, inv, grad);
      }
      if (!std::isfinite(loss))
        throw TrainingError("training diverged at step " +
                            std::to_string(step));
      opt.apply(model.policy, grad, cfg.policy_lr);
      ++step;
      last_loss = loss;
      if (cfg.log_every > 0 && step % cfg.log_every == 0)
        model.history.push_back(
            MetricsRecord{step, 0.0, last_loss, 0.0, 0.0, std::nullopt});
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
  }
  if (model.history.empty() || model.history.back().step != step)
    model.history.push_back(
        MetricsRecord{step, 0.0, last_loss, 0.0, 0.0, std::nullopt});
  augment_with_afterstates(model.value, mdp, cfg.state_cap);
  return model;
}

}  // namespace

TrainedModel sft_train(const OfflineDataset& dataset, const TaskMdp& mdp,
                       const PolicyTable& ref, const TrainConfig& cfg) {
  return policy_only_train<Trajectory>(
      dataset.trajectories, mdp, ref, cfg,
      [](const Trajectory& t, const PolicyTable& pi) {
        return sft_loss(t, pi);
      },
      [](const Trajectory& t, const PolicyTable& pi, double scale,
         PolicyGrad& g) { accumulate_sft_gradient(t, pi, scale, g); });
}

TrainedModel rejection_sampling_train(const OfflineDataset& dataset,
                                      const TaskMdp& mdp,
                                      const PolicyTable& ref,
                                      const TrainConfig& cfg) {
  std::vector<Trajectory> positives;
  for (const Trajectory& t : dataset.trajectories)
    if (t.terminal_reward() > 0.0) positives.push_back(t);
  if (positives.empty())
    throw TrainingError(
        "rejection sampling: dataset contains no reward-1 trajectories");
  return policy_only_train<Trajectory>(
      positives, mdp, ref, cfg,
      [](const Trajectory& t, const PolicyTable& pi) {
        return sft_loss(t, pi);
      },
      [](const Trajectory& t, const PolicyTable& pi, double scale,
         PolicyGrad& g) { accumulate_sft_gradient(t, pi, scale, g); });
}

TrainedModel dpo_train(std::span<const PreferencePair> pairs,
                       const TaskMdp& mdp, const PolicyTable& ref,
                       const TrainConfig& cfg) {
  if (pairs.empty()) throw ContractError("dpo_train: no preference pairs");
  const double beta = cfg.beta;
  return policy_only_train<PreferencePair>(
      pairs, mdp, ref, cfg,
      [&ref, beta](const PreferencePair& p, const PolicyTable& pi) {
        return dpo_loss(p, pi, ref, beta);
      },
      [&ref, beta](const PreferencePair& p, const PolicyTable& pi,
                   double scale, PolicyGrad& g) {
        accumulate_dpo_gradient(p, pi, ref, beta, scale, g);
      });
}

// ---------------------------------------------------------------------------
// pairs serialization

std::string pairs_to_jsonl(std::span<const PreferencePair> pairs) {
  std::string out;
  for (const PreferencePair& pair : pairs) {
    nlohmann::ordered_json j;
    j["task"] = pair.task;
    j["winner"] = pair.winner_index;
    j["loser"] = pair.loser_index;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferencePair> parse_pairs_jsonl(const OfflineDataset& dataset,
                                              std::string_view text) {
  std::vector<PreferencePair> pairs;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
    PreferencePair pair;
    pair.task = j.at("task").get<int>();
    pair.winner_index = j.at("winner").get<std::size_t>();
    pair.loser_index = j.at("loser").get<std::size_t>();
    if (pair.winner_index >= dataset.size() ||
        pair.loser_index >= dataset.size())
      throw IoError("pairs line " + std::to_string(line_no) +
                    ": index out of range");
    pair.winner = dataset.trajectories[pair.winner_index];
    pair.loser = dataset.trajectories[pair.loser_index];
    if (!(pair.winner.terminal_reward() > pair.loser.terminal_reward()))
      throw ContractError("pairs line " + std::to_string(line_no) +
                          ": winner reward must exceed loser reward");
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace oreo
