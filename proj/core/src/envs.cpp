#include "oreo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"

namespace oreo {

EnvFamily env_family_from_string(const std::string& name) {
  if (name == "digit-chain") return EnvFamily::kDigitChain;
  if (name == "keyhole") return EnvFamily::kKeyhole;
  if (name == "gridworld") return EnvFamily::kGridworld;
  throw ConfigError("unknown env family '" + name + "'");
}

std::string to_string(EnvFamily family) {
  switch (family) {
    case EnvFamily::kDigitChain: return "digit-chain";
    case EnvFamily::kKeyhole: return "keyhole";
    case EnvFamily::kGridworld: return "gridworld";
  }
  return "?";
}

namespace {

std::vector<Action> all_tokens(int vocab) {
  std::vector<Action> actions;
  actions.reserve(static_cast<std::size_t>(vocab));
  for (TokenId t = 0; t < vocab; ++t) actions.push_back(Action{t});
  return actions;
}

// ---------------------------------------------------------------------------
// digit-chain

class DigitChainMdp final : public TaskMdp {
 public:
  explicit DigitChainMdp(const EnvSpec& spec)
      : vocab_(spec.vocab),
        depth_(spec.depth),
        modulus_(spec.modulus == 0 ? spec.vocab : spec.modulus),
        step_len_(spec.tokens_per_step),
        instances_(spec.instances),
        reward_scale_(spec.reward_scale) {
    if (vocab_ < 2) throw ConfigError("digit-chain: vocab must be >= 2");
    if (depth_ < 1) throw ConfigError("digit-chain: depth must be >= 1");
    if (step_len_ < 1)
      throw ConfigError("digit-chain: tokens_per_step must be >= 1");
    if (modulus_ < 2 || modulus_ > vocab_)
      throw ConfigError("digit-chain: modulus must be in [2, vocab]");
    if (instances_ < 1)
      throw ConfigError("digit-chain: instances must be >= 1");
  }

  int vocab_size() const override { return vocab_; }
  int horizon() const override { return depth_ * step_len_; }
  bool has_observations() const override { return false; }

  std::vector<State> initial_states() const override {
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(instances_));
    for (int k = 0; k < instances_; ++k) {
      const TokenId a = static_cast<TokenId>((k / modulus_) % modulus_);
      const TokenId b = static_cast<TokenId>(k % modulus_);
      out.push_back(State{{a, b}, {2}, false});
    }
    return out;
  }

  std::vector<Action> legal_actions(const State& s) const override {
    if (s.terminal) return {};
    return all_tokens(vocab_);
  }

 protected:
  State do_transition(const State& s, Action a) const override {
    State next = s;
    next.tokens.push_back(a.token);
    const int emitted = static_cast<int>(next.tokens.size()) - kPromptLen;
    if (emitted % step_len_ == 0)
      next.boundaries.push_back(static_cast<std::int32_t>(next.tokens.size()));
    next.terminal = emitted == depth_ * step_len_;
    return next;
  }

  double do_reward(const State& s, Action a) const override {
    const int emitted = static_cast<int>(s.tokens.size()) - kPromptLen + 1;
    if (emitted != depth_ * step_len_) return 0.0;
    // Check the final token of every reasoning step against the running sum
    // (a + j*b) mod m; scratch tokens inside a step are unconstrained.
    std::vector<TokenId> full(s.tokens);
    full.push_back(a.token);
    const int base = full[0];
    const int inc = full[1];
    for (int j = 1; j <= depth_; ++j) {
      const TokenId expected =
          static_cast<TokenId>((base + j * inc) % modulus_);
      if (full[static_cast<std::size_t>(kPromptLen + j * step_len_ - 1)] !=
          expected)
        return 0.0;
    }
    return reward_scale_;
  }

 private:
  static constexpr int kPromptLen = 2;
  int vocab_;
  int depth_;
  int modulus_;
  int step_len_;
  int instances_;
  double reward_scale_;
};

// ---------------------------------------------------------------------------
// keyhole

class KeyholeMdp final : public TaskMdp {
 public:
  explicit KeyholeMdp(const EnvSpec& spec)
      : vocab_(spec.vocab),
        depth_(spec.depth),
        key_position_(spec.key_position),
        key_token_(spec.key_token),
        instances_(spec.instances),
        reward_scale_(spec.reward_scale) {
    if (vocab_ < 2) throw ConfigError("keyhole: vocab must be >= 2");
    if (depth_ < 1) throw ConfigError("keyhole: depth must be >= 1");
    if (key_position_ < 0 || key_position_ >= depth_)
      throw ConfigError("keyhole: key position must be in [0, depth)");
    if (key_token_ < 0 || key_token_ >= vocab_)
      throw ConfigError("keyhole: key token must be in [0, vocab)");
    if (instances_ < 1) throw ConfigError("keyhole: instances must be >= 1");
  }

  int vocab_size() const override { return vocab_; }
  int horizon() const override { return depth_; }
  bool has_observations() const override { return false; }

  std::vector<State> initial_states() const override {
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(instances_));
    for (int k = 0; k < instances_; ++k)
      out.push_back(
          State{{static_cast<TokenId>(k % vocab_)}, {1}, false});
    return out;
  }

  std::vector<Action> legal_actions(const State& s) const override {
    if (s.terminal) return {};
    return all_tokens(vocab_);
  }

 protected:
  State do_transition(const State& s, Action a) const override {
    State next = s;
    next.tokens.push_back(a.token);
    next.boundaries.push_back(static_cast<std::int32_t>(next.tokens.size()));
    next.terminal =
        static_cast<int>(next.tokens.size()) - kPromptLen == depth_;
    return next;
  }

  double do_reward(const State& s, Action a) const override {
    const int emitted = static_cast<int>(s.tokens.size()) - kPromptLen + 1;
    if (emitted != depth_) return 0.0;
    const TokenId at_key =
        key_position_ == depth_ - 1
            ? a.token
            : s.tokens[static_cast<std::size_t>(kPromptLen + key_position_)];
    return at_key == key_token_ ? reward_scale_ : 0.0;
  }

 private:
  static constexpr int kPromptLen = 1;
  int vocab_;
  int depth_;
  int key_position_;
  TokenId key_token_;
  int instances_;
  double reward_scale_;
};

// ---------------------------------------------------------------------------
// gridworld

class GridworldMdp final : public TaskMdp {
 public:
  explicit GridworldMdp(const EnvSpec& spec)
      : width_(spec.grid_width),
        height_(spec.grid_height),
        horizon_(spec.horizon),
        instances_(spec.instances),
        reward_scale_(spec.reward_scale) {
    if (width_ < 2) throw ConfigError("gridworld: grid width must be >= 2");
    if (height_ < 1) throw ConfigError("gridworld: grid height must be >= 1");
    const int cells = width_ * height_;
    goal_ = spec.goal_cell < 0 ? cells - 1 : spec.goal_cell;
    if (goal_ >= cells) throw ConfigError("gridworld: goal cell out of grid");
    if (horizon_ < 1) throw ConfigError("gridworld: horizon must be >= 1");
    if (instances_ < 1) throw ConfigError("gridworld: instances must be >= 1");
    // vocab is derived (4 moves + one observation token per cell); values
    // <= 2 mean "unset" since no grid fits in two tokens.
    if (spec.vocab > 2 && spec.vocab != kMoves + cells)
      throw ConfigError("gridworld: vocab is derived as 4 + cells; got " +
                        std::to_string(spec.vocab));
    if (spec.start_cell < 0 || spec.start_cell >= cells)
      throw ConfigError("gridworld: start cell out of grid");
    for (int c = 0; c < cells; ++c)
      if (c != goal_) non_goal_cells_.push_back(c);
    base_start_index_ = 0;
    for (std::size_t i = 0; i < non_goal_cells_.size(); ++i)
      if (non_goal_cells_[i] == spec.start_cell) base_start_index_ = i;
    if (spec.start_cell == goal_)
      throw ConfigError("gridworld: start cell equals goal cell");
    // Moves clamp at the border, so the reachability requirement reduces to
    // Manhattan distance within the horizon for every instance start.
    for (int k = 0; k < instances_; ++k) {
      const int start = start_cell(k);
      const int dist = std::abs(start % width_ - goal_ % width_) +
                       std::abs(start / width_ - goal_ / width_);
      if (dist > horizon_)
        throw ConfigError("gridworld: goal unreachable within horizon from "
                          "instance " +
                          std::to_string(k));
    }
  }

  int vocab_size() const override { return kMoves + width_ * height_; }
  int horizon() const override { return horizon_; }
  bool has_observations() const override { return true; }

  std::vector<State> initial_states() const override {
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(instances_));
    for (int k = 0; k < instances_; ++k)
      out.push_back(State{{obs_token(start_cell(k))}, {1}, false});
    return out;
  }

  std::vector<Action> legal_actions(const State& s) const override {
    if (s.terminal) return {};
    std::vector<Action> actions;
    actions.reserve(kMoves);
    for (TokenId t = 0; t < kMoves; ++t) actions.push_back(Action{t});
    return actions;
  }

 protected:
  State do_transition(const State& s, Action a) const override {
    const int next_cell = move(position_of(s), a.token);
    State next = s;
    next.tokens.push_back(a.token);
    next.tokens.push_back(obs_token(next_cell));
    next.boundaries.push_back(static_cast<std::int32_t>(next.tokens.size()));
    const int moves_taken = static_cast<int>(next.tokens.size() - 1) / 2;
    next.terminal = next_cell == goal_ || moves_taken == horizon_;
    return next;
  }

  double do_reward(const State& s, Action a) const override {
    return move(position_of(s), a.token) == goal_ ? reward_scale_ : 0.0;
  }

 private:
  static constexpr int kMoves = 4;  // 0=left 1=right 2=up 3=down

  TokenId obs_token(int cell) const {
    return static_cast<TokenId>(kMoves + cell);
  }

  int start_cell(int instance) const {
    return non_goal_cells_[(base_start_index_ +
                            static_cast<std::size_t>(instance)) %
                           non_goal_cells_.size()];
  }

  int position_of(const State& s) const {
    // The state always ends with the observation of the current cell.
    return s.tokens.back() - kMoves;
  }

  int move(int cell, TokenId dir) const {
    int x = cell % width_;
    int y = cell / width_;
    switch (dir) {
      case 0: x = std::max(x - 1, 0); break;
      case 1: x = std::min(x + 1, width_ - 1); break;
      case 2: y = std::max(y - 1, 0); break;
      case 3: y = std::min(y + 1, height_ - 1); break;
      default: break;
    }
    return y * width_ + x;
  }

  int width_;
  int height_;
  int horizon_;
  int instances_;
  double reward_scale_;
  int goal_ = 0;
  std::vector<int> non_goal_cells_;
  std::size_t base_start_index_ = 0;
};

}  // namespace

std::unique_ptr<TaskMdp> make_digit_chain(const EnvSpec& spec) {
  return std::make_unique<DigitChainMdp>(spec);
}

std::unique_ptr<TaskMdp> make_keyhole(const EnvSpec& spec) {
  return std::make_unique<KeyholeMdp>(spec);
}

std::unique_ptr<TaskMdp> make_gridworld(const EnvSpec& spec) {
  return std::make_unique<GridworldMdp>(spec);
}

std::unique_ptr<TaskMdp> make_env(const EnvSpec& spec) {
  switch (spec.family) {
    case EnvFamily::kDigitChain: return make_digit_chain(spec);
    case EnvFamily::kKeyhole: return make_keyhole(spec);
    case EnvFamily::kGridworld: return make_gridworld(spec);
  }
  throw ConfigError("unknown env family");
}

Trajectory rollout(const TaskMdp& mdp, const PolicyTable& behavior,
                   const State& s0, Rng& rng) {
  Trajectory traj;
  State cur = s0;
  while (!cur.terminal) {
    const PolicyTable::Entry& e = behavior.entry(cur);
    const std::size_t i = rng.sample_categorical(softmax(e.logits));
    const Action a = e.actions[i];
    const double r = mdp.reward(cur, a);
    State next = mdp.transition(cur, a);
    traj.steps.push_back({std::move(cur), a, r});
    cur = std::move(next);
  }
  traj.final_state = std::move(cur);
  return traj;
}

OfflineDataset generate_offline_dataset(const TaskMdp& mdp,
                                        const PolicyTable& behavior,
                                        int n_per_task, std::uint64_t seed) {
  if (n_per_task < 1)
    throw ConfigError("generate_offline_dataset: n_per_task must be >= 1");
  OfflineDataset dataset;
  const auto initial = mdp.initial_states();
  for (std::size_t k = 0; k < initial.size(); ++k) {
    Rng rng(derive_seed(seed, "rollout", k));
    for (int i = 0; i < n_per_task; ++i) {
      dataset.trajectories.push_back(rollout(mdp, behavior, initial[k], rng));
      dataset.task_ids.push_back(static_cast<int>(k));
    }
  }
  return dataset;
}

namespace {

void enumerate_trajectories(const TaskMdp& mdp, const State& s,
                            std::vector<TrajStep>& prefix, int task,
                            std::size_t cap, OfflineDataset& dataset) {
  if (s.terminal) {
    if (dataset.trajectories.size() >= cap)
      throw ResourceError("enumerate_dataset: trajectory cap " +
                          std::to_string(cap) + " exceeded");
    dataset.trajectories.push_back(Trajectory{prefix, s});
    dataset.task_ids.push_back(task);
    return;
  }
  for (Action a : mdp.legal_actions(s)) {
    prefix.push_back({s, a, mdp.reward(s, a)});
    enumerate_trajectories(mdp, mdp.transition(s, a), prefix, task, cap,
                           dataset);
    prefix.pop_back();
  }
}

}  // namespace

OfflineDataset enumerate_dataset(const TaskMdp& mdp, std::size_t cap) {
  OfflineDataset dataset;
  const auto initial = mdp.initial_states();
  std::vector<TrajStep> prefix;
  for (std::size_t k = 0; k < initial.size(); ++k)
    enumerate_trajectories(mdp, initial[k], prefix, static_cast<int>(k), cap,
                           dataset);
  return dataset;
}

OfflineDataset balance_dataset(const OfflineDataset& dataset,
                               int max_per_class, std::uint64_t seed) {
  if (max_per_class < 1)
    throw ConfigError("balance_dataset: max_per_class must be >= 1");
  std::vector<int> tasks(dataset.task_ids);
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());

  OfflineDataset out;
  for (int task : tasks) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.task_ids[i] != task) continue;
      (dataset.trajectories[i].terminal_reward() > 0.0 ? pos : neg)
          .push_back(i);
    }
    Rng rng(derive_seed(seed, "balance", static_cast<std::uint64_t>(task)));
    const std::size_t want = static_cast<std::size_t>(max_per_class);
    auto pick = [&](const std::vector<std::size_t>& from, std::size_t n) {
      auto chosen = sample_without_replacement(from.size(),
                                               std::min(n, from.size()), rng);
      std::vector<std::size_t> ids;
      for (std::size_t c : chosen) ids.push_back(from[c]);
      std::sort(ids.begin(), ids.end());
      return ids;
    };
    const auto neg_ids = pick(neg, want);
    // Positives never outnumber negatives, but keep at least one if any.
    std::size_t pos_budget = std::min(want, neg_ids.size());
    if (pos_budget == 0 && !pos.empty()) pos_budget = 1;
    const auto pos_ids = pick(pos, pos_budget);
    std::vector<std::size_t> keep(neg_ids);
    keep.insert(keep.end(), pos_ids.begin(), pos_ids.end());
    std::sort(keep.begin(), keep.end());
    for (std::size_t i : keep) {
      out.trajectories.push_back(dataset.trajectories[i]);
      out.task_ids.push_back(task);
    }
  }
  return out;
}

}  // namespace oreo
