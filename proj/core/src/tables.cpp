#include "oreo/tables.hpp"

#include <algorithm>
#include <cmath>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"
#include "oreo/rng.hpp"

namespace oreo {

namespace {

bool key_less(const StateKey& a, const StateKey& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

void PolicyTable::define_state(const State& s, std::vector<Action> actions,
                               std::vector<double> logits) {
  if (s.terminal)
    throw ContractError("PolicyTable: terminal state admits no actions");
  if (actions.empty() || actions.size() != logits.size())
    throw ContractError("PolicyTable: actions/logits size mismatch");
  if (defined(s))
    throw ContractError("PolicyTable: state already defined: [" +
                        format_tokens(s.tokens) + "]");
  table_.emplace(s.tokens,
                 Entry{std::move(actions), std::move(logits)});
}

const PolicyTable::Entry& PolicyTable::entry(const State& s) const {
  return entry_by_key(s.tokens);
}

const PolicyTable::Entry& PolicyTable::entry_by_key(const StateKey& k) const {
  auto it = table_.find(k);
  if (it == table_.end())
    throw ContractError("PolicyTable: unknown state [" + format_tokens(k) +
                        "]");
  return it->second;
}

std::vector<double>& PolicyTable::logits_mut(const StateKey& k) {
  auto it = table_.find(k);
  if (it == table_.end())
    throw ContractError("PolicyTable: unknown state [" + format_tokens(k) +
                        "]");
  return it->second.logits;
}

std::size_t PolicyTable::action_index(const State& s, Action a) const {
  const Entry& e = entry(s);
  auto it = std::find(e.actions.begin(), e.actions.end(), a);
  if (it == e.actions.end())
    throw DomainError("PolicyTable: action " + std::to_string(a.token) +
                      " unknown in state [" + format_tokens(s.tokens) + "]");
  return static_cast<std::size_t>(it - e.actions.begin());
}

std::vector<double> PolicyTable::probs(const State& s) const {
  return softmax(entry(s).logits);
}

std::vector<double> PolicyTable::log_probs(const State& s) const {
  return log_softmax(entry(s).logits);
}

double PolicyTable::prob(const State& s, Action a) const {
  return probs(s)[action_index(s, a)];
}

double PolicyTable::log_prob(const State& s, Action a) const {
  return log_probs(s)[action_index(s, a)];
}

std::vector<StateKey> PolicyTable::sorted_keys() const {
  std::vector<StateKey> keys;
  keys.reserve(table_.size());
  for (const auto& [k, _] : table_) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), key_less);
  return keys;
}

double ValueTable::value(const State& s) const {
  if (s.terminal) return 0.0;
  return at_key(s.tokens);
}

double ValueTable::at_key(const StateKey& k) const {
  auto it = values_.find(k);
  if (it == values_.end())
    throw ContractError("ValueTable: unknown state [" + format_tokens(k) +
                        "]");
  return it->second;
}

void ValueTable::set(const State& s, double v) {
  if (s.terminal)
    throw ContractError("ValueTable: terminal states are fixed at 0");
  values_[s.tokens] = v;
}

void ValueTable::add_key(const StateKey& k, double delta) {
  auto it = values_.find(k);
  if (it == values_.end())
    throw ContractError("ValueTable: unknown state [" + format_tokens(k) +
                        "]");
  it->second += delta;
}

std::vector<StateKey> ValueTable::sorted_keys() const {
  std::vector<StateKey> keys;
  keys.reserve(values_.size());
  for (const auto& [k, _] : values_) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), key_less);
  return keys;
}

double log_ratio(const PolicyTable& pi, const PolicyTable& ref, const State& s,
                 Action a) {
  const double lp = pi.log_prob(s, a);
  const double lq = ref.log_prob(s, a);
  if (!(lq > kLogFloor))
    throw SupportError("reference policy has no support on action " +
                       std::to_string(a.token) + " in state [" +
                       format_tokens(s.tokens) + "]");
  return lp - lq;
}

double kl_to_reference(const PolicyTable& pi, const PolicyTable& ref,
                       const State& s) {
  const PolicyTable::Entry& ep = pi.entry(s);
  const PolicyTable::Entry& eq = ref.entry(s);
  if (ep.actions != eq.actions)
    throw ContractError("kl_to_reference: action sets differ in state [" +
                        format_tokens(s.tokens) + "]");
  const std::vector<double> lp = log_softmax(ep.logits);
  const std::vector<double> lq = log_softmax(eq.logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(std::max(lp[i], kLogFloor));
    if (p == 0.0) continue;
    kl += p * (lp[i] - lq[i]);
  }
  return std::max(kl, 0.0);
}

double step_log_prob(const PolicyTable& pi, const TaskMdp& mdp, const State& s,
                     std::span<const TokenId> step_tokens) {
  double acc = 0.0;
  State cur = s;
  for (TokenId t : step_tokens) {
    acc += pi.log_prob(cur, Action{t});
    cur = mdp.transition(cur, Action{t});  // throws DomainError mid-step
  }
  return acc;
}

double policy_total_variation(const PolicyTable& pi, const PolicyTable& other,
                              const State& s) {
  const PolicyTable::Entry& ep = pi.entry(s);
  const PolicyTable::Entry& eq = other.entry(s);
  if (ep.actions != eq.actions)
    throw ContractError("policy_total_variation: action sets differ");
  return total_variation(softmax(ep.logits), softmax(eq.logits));
}

double max_total_variation(const PolicyTable& pi, const PolicyTable& other,
                           const TaskMdp& mdp, std::size_t cap) {
  double worst = 0.0;
  for (const State& s : enumerate_states(mdp, cap)) {
    if (s.terminal) continue;
    worst = std::max(worst, policy_total_variation(pi, other, s));
  }
  return worst;
}

PolicyTable make_uniform_reference(const TaskMdp& mdp, std::size_t cap) {
  PolicyTable table;
  for (const State& s : enumerate_states(mdp, cap)) {
    if (s.terminal) continue;
    auto actions = mdp.legal_actions(s);
    table.define_state(s, actions, std::vector<double>(actions.size(), 0.0));
  }
  return table;
}

PolicyTable make_perturbed_reference(const TaskMdp& mdp, double sigma,
                                     std::uint64_t seed, std::size_t cap) {
  if (sigma < 0.0)
    throw ConfigError("make_perturbed_reference: sigma must be >= 0");
  PolicyTable table;
  Rng rng(derive_seed(seed, "perturbed-reference"));
  for (const State& s : enumerate_states(mdp, cap)) {
    if (s.terminal) continue;
    auto actions = mdp.legal_actions(s);
    std::vector<double> logits(actions.size());
    for (double& z : logits) z = sigma * rng.next_normal();
    table.define_state(s, actions, std::move(logits));
  }
  return table;
}

}  // namespace oreo
