#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace oreo {

/// Token in [0, vocab_size) of the owning MDP.
using TokenId = std::int32_t;

/// Single-token action. Step-level views treat a contiguous token run as one
/// action; that grouping lives in the trajectory's boundary markers, not here.
struct Action {
  TokenId token = 0;

  friend bool operator==(Action a, Action b) { return a.token == b.token; }
  friend auto operator<=>(Action a, Action b) { return a.token <=> b.token; }
};

/// Canonical table key: the exact token sequence. State identity is the
/// token sequence and nothing else.
using StateKey = std::vector<TokenId>;

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : k) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

/// MDP state: prompt plus generated tokens plus any interleaved observation
/// tokens. `boundaries` holds strictly increasing prefix lengths at which a
/// reasoning step ends; a terminal state admits no actions.
struct State {
  StateKey tokens;
  std::vector<std::int32_t> boundaries;
  bool terminal = false;

  // Identity is exact token-sequence equality.
  friend bool operator==(const State& a, const State& b) {
    return a.tokens == b.tokens;
  }
};

struct TrajStep {
  State state;
  Action action;
  double reward = 0.0;
};

/// Ordered (state, action, reward) record ending in a terminal state.
/// Reward is zero at every step except possibly the last.
struct Trajectory {
  std::vector<TrajStep> steps;
  State final_state;

  std::size_t size() const { return steps.size(); }
  double terminal_reward() const {
    return steps.empty() ? 0.0 : steps.back().reward;
  }
};

/// "3,1,4" rendering used by checkpoints and error messages.
std::string format_tokens(std::span<const TokenId> tokens);

}  // namespace oreo
