#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "oreo/mdp.hpp"
#include "oreo/types.hpp"

namespace oreo {

// Tabular softmax policy: per state, the legal actions and one raw logit
// each. Probabilities are always computed with a max-subtracted softmax;
// logits are stored unnormalized.
class PolicyTable {
 public:
  struct Entry {
    std::vector<Action> actions;
    std::vector<double> logits;
  };

  void define_state(const State& s, std::vector<Action> actions,
                    std::vector<double> logits);

  bool defined(const State& s) const { return table_.count(s.tokens) > 0; }
  bool defined_key(const StateKey& k) const { return table_.count(k) > 0; }
  std::size_t size() const { return table_.size(); }

  const Entry& entry(const State& s) const;
  const Entry& entry_by_key(const StateKey& k) const;

  /// Mutable logits for training updates.
  std::vector<double>& logits_mut(const StateKey& k);

  /// Index of `a` in the state's action list; DomainError if absent.
  std::size_t action_index(const State& s, Action a) const;

  std::vector<double> probs(const State& s) const;
  std::vector<double> log_probs(const State& s) const;
  double prob(const State& s, Action a) const;
  double log_prob(const State& s, Action a) const;

  /// Keys sorted by (length, lexicographic) for deterministic serialization.
  std::vector<StateKey> sorted_keys() const;

 private:
  std::unordered_map<StateKey, Entry, StateKeyHash> table_;
};

// Per-state scalar estimates. Terminal states are identically 0 and are
// never stored; reading an unknown non-terminal state is an error rather
// than a silent default.
class ValueTable {
 public:
  double value(const State& s) const;
  double at_key(const StateKey& k) const;
  bool defined(const State& s) const {
    return s.terminal || values_.count(s.tokens) > 0;
  }
  bool defined_key(const StateKey& k) const { return values_.count(k) > 0; }
  std::size_t size() const { return values_.size(); }

  void set(const State& s, double v);
  void set_key(const StateKey& k, double v) { values_[k] = v; }
  void add_key(const StateKey& k, double delta);

  std::vector<StateKey> sorted_keys() const;

 private:
  std::unordered_map<StateKey, double, StateKeyHash> values_;
};

/// log pi(a|s) - log ref(a|s). SupportError if ref assigns (numerically)
/// zero probability to `a`.
double log_ratio(const PolicyTable& pi, const PolicyTable& ref, const State& s,
                 Action a);

/// Exact categorical KL(pi(.|s) || ref(.|s)); ContractError if the two
/// tables disagree on the legal-action set; never negative.
double kl_to_reference(const PolicyTable& pi, const PolicyTable& ref,
                       const State& s);

/// Sum of per-token log probabilities of `step_tokens` rolled from `s`.
double step_log_prob(const PolicyTable& pi, const TaskMdp& mdp, const State& s,
                     std::span<const TokenId> step_tokens);

/// 0.5 * sum_a |pi(a|s) - other(a|s)| over the shared action set.
double policy_total_variation(const PolicyTable& pi, const PolicyTable& other,
                              const State& s);

/// Max of policy_total_variation over all reachable non-terminal states.
double max_total_variation(const PolicyTable& pi, const PolicyTable& other,
                           const TaskMdp& mdp,
                           std::size_t cap = kDefaultStateCap);

/// Uniform policy over legal actions of every reachable non-terminal state.
PolicyTable make_uniform_reference(const TaskMdp& mdp,
                                   std::size_t cap = kDefaultStateCap);

/// Uniform reference with i.i.d. N(0, sigma^2) logit noise.
PolicyTable make_perturbed_reference(const TaskMdp& mdp, double sigma,
                                     std::uint64_t seed,
                                     std::size_t cap = kDefaultStateCap);

}  // namespace oreo
