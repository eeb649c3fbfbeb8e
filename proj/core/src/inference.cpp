#include "oreo/inference.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"

namespace oreo {

Trajectory greedy_decode(const PolicyTable& pi, const TaskMdp& mdp,
                         const State& s0) {
  Trajectory traj;
  State cur = s0;
  while (!cur.terminal) {
    const PolicyTable::Entry& e = pi.entry(cur);
    const std::vector<double> p = softmax(e.logits);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;  // strict: ties keep the lowest token
    const Action a = e.actions[best];
    const double r = mdp.reward(cur, a);
    State next = mdp.transition(cur, a);
    traj.steps.push_back({std::move(cur), a, r});
    cur = std::move(next);
  }
  traj.final_state = std::move(cur);
  return traj;
}

namespace {

struct Candidate {
  std::vector<TrajStep> steps;
  State state;
  double reward_sum = 0.0;
  double score = 0.0;
  bool finished = false;
};

// One reasoning step continued from `from`: the rolled token path until a
// boundary marker closes or the episode terminates.
struct Proposal {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
};

constexpr std::size_t kStepSpaceCap = 4096;

// Depth-first enumeration of the full step space in token order.
void enumerate_proposals(const PolicyTable& pi, const TaskMdp& mdp,
                         const State& s, std::vector<TokenId>& prefix,
                         double log_prob_acc, std::vector<Proposal>& out,
                         bool& overflow) {
  if (overflow) return;
  const PolicyTable::Entry& e = pi.entry(s);
  const std::vector<double> lp = log_softmax(e.logits);
  for (std::size_t i = 0; i < e.actions.size(); ++i) {
    const State next = mdp.transition(s, e.actions[i]);
    prefix.push_back(e.actions[i].token);
    const bool closes =
        next.terminal || next.boundaries.size() > s.boundaries.size();
    if (closes) {
      if (out.size() >= kStepSpaceCap) {
        overflow = true;
      } else {
        out.push_back({prefix, log_prob_acc + lp[i]});
      }
    } else {
      enumerate_proposals(pi, mdp, next, prefix, log_prob_acc + lp[i], out,
                          overflow);
    }
    prefix.pop_back();
    if (overflow) return;
  }
}

std::vector<TokenId> sample_step_path(const PolicyTable& pi,
                                      const TaskMdp& mdp, const State& s,
                                      Rng& rng) {
  std::vector<TokenId> tokens;
  State cur = s;
  while (true) {
    const PolicyTable::Entry& e = pi.entry(cur);
    const std::size_t i = rng.sample_categorical(softmax(e.logits));
    const State next = mdp.transition(cur, e.actions[i]);
    tokens.push_back(e.actions[i].token);
    if (next.terminal || next.boundaries.size() > cur.boundaries.size())
      return tokens;
    cur = next;
  }
}

// Up to `want` distinct next steps for one candidate. Small step spaces are
// enumerated and sampled without replacement by probability mass; otherwise
// paths are sampled with replacement and deduplicated.
std::vector<std::vector<TokenId>> propose_steps(const PolicyTable& pi,
                                                const TaskMdp& mdp,
                                                const State& s, int want,
                                                Rng& rng) {
  std::vector<Proposal> space;
  std::vector<TokenId> prefix;
  bool overflow = false;
  enumerate_proposals(pi, mdp, s, prefix, 0.0, space, overflow);

  std::vector<std::vector<TokenId>> chosen;
  if (!overflow) {
    if (space.size() <= static_cast<std::size_t>(want)) {
      for (const Proposal& p : space) chosen.push_back(p.tokens);
      return chosen;
    }
    std::vector<double> weights(space.size());
    for (std::size_t i = 0; i < space.size(); ++i)
      weights[i] = std::exp(std::max(space[i].log_prob, kLogFloor));
    std::vector<bool> taken(space.size(), false);
    double mass = 0.0;
    for (double w : weights) mass += w;
    for (int pick = 0; pick < want; ++pick) {
      const double u = rng.next_unit() * mass;
      double acc = 0.0;
      std::size_t sel = space.size();
      for (std::size_t i = 0; i < space.size(); ++i) {
        if (taken[i]) continue;
        acc += weights[i];
        if (u < acc) {
          sel = i;
          break;
        }
      }
      if (sel == space.size()) {  // rounding slack: last untaken
        for (std::size_t i = space.size(); i-- > 0;)
          if (!taken[i]) {
            sel = i;
            break;
          }
      }
      taken[sel] = true;
      mass -= weights[sel];
      chosen.push_back(space[sel].tokens);
    }
    return chosen;
  }

  for (int pick = 0; pick < want; ++pick) {
    auto tokens = sample_step_path(pi, mdp, s, rng);
    if (std::find(chosen.begin(), chosen.end(), tokens) == chosen.end())
      chosen.push_back(std::move(tokens));
  }
  return chosen;
}

Candidate extend(const Candidate& parent, const TaskMdp& mdp,
                 const ValueTable& value, std::span<const TokenId> tokens) {
  Candidate child;
  child.steps = parent.steps;
  child.reward_sum = parent.reward_sum;
  State cur = parent.state;
  for (TokenId t : tokens) {
    const Action a{t};
    const double r = mdp.reward(cur, a);
    State next = mdp.transition(cur, a);
    child.steps.push_back({std::move(cur), a, r});
    child.reward_sum += r;
    cur = std::move(next);
  }
  child.state = std::move(cur);
  if (child.state.terminal) {
    child.finished = true;
    // Frozen rank: value of the last decision state plus what was collected.
    child.score = value.value(child.steps.back().state) + child.reward_sum;
  } else {
    child.score = value.value(child.state);
  }
  return child;
}

}  // namespace

Trajectory beam_search(const PolicyTable& pi, const ValueTable& value,
                       const TaskMdp& mdp, const State& s0, int beam_width,
                       Rng& rng) {
  if (beam_width < 1)
    throw ConfigError("beam_search: beam width must be >= 1");
  if (s0.terminal) return Trajectory{{}, s0};

  std::vector<Candidate> beam;
  beam.push_back(Candidate{{}, s0, 0.0, 0.0, false});
  bool all_finished = false;
  while (!all_finished) {
    std::vector<Candidate> pool;
    all_finished = true;
    for (const Candidate& cand : beam) {
      if (cand.finished) {
        pool.push_back(cand);
        continue;
      }
      all_finished = false;
      for (const auto& tokens :
           propose_steps(pi, mdp, cand.state, beam_width, rng))
        pool.push_back(extend(cand, mdp, value, tokens));
    }
    if (all_finished) {
      beam = std::move(pool);
      break;
    }
    // Stable sort keeps (candidate index, proposal index) order on ties.
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.score > b.score;
                     });
    if (pool.size() > static_cast<std::size_t>(beam_width))
      pool.resize(static_cast<std::size_t>(beam_width));
    beam = std::move(pool);
  }

  const Candidate* best = &beam.front();
  for (const Candidate& cand : beam) {
    if (cand.score > best->score ||
        (cand.score == best->score && cand.reward_sum > best->reward_sum))
      best = &cand;
  }
  return Trajectory{best->steps, best->state};
}

Action best_of_k(const PolicyTable& pi, const ValueTable& value,
                 const TaskMdp& mdp, const State& s, int k, Rng& rng) {
  if (k < 1) throw ConfigError("best_of_k: k must be >= 1");
  (void)mdp;
  const PolicyTable::Entry& e = pi.entry(s);
  const std::vector<double> p = softmax(e.logits);
  Action best{};
  double best_score = 0.0;
  for (int i = 0; i < k; ++i) {
    const Action a = e.actions[rng.sample_categorical(p)];
    StateKey key = s.tokens;
    key.push_back(a.token);
    // Score the pending action without consulting the dynamics.
    const double score = value.at_key(key);
    if (i == 0 || score > best_score) {
      best = a;
      best_score = score;
    }
  }
  return best;
}

double advantage_explicit(const ValueTable& value, const State& s_i,
                          const State& s_j) {
  return value.value(s_j) - value.value(s_i);
}

double advantage_implicit(const PolicyTable& pi, const PolicyTable& ref,
                          const Trajectory& traj, std::size_t i, std::size_t j,
                          double beta) {
  if (i >= j || j > traj.steps.size())
    throw ContractError("advantage_implicit: need 0 <= i < j <= T");
  double acc = 0.0;
  for (std::size_t t = i; t < j; ++t)
    acc += beta *
           log_ratio(pi, ref, traj.steps[t].state, traj.steps[t].action);
  return acc;
}

AdvantageReport advantage_report(const Trajectory& traj,
                                 const ValueTable& value,
                                 const PolicyTable& pi, const PolicyTable& ref,
                                 double beta, std::size_t i, std::size_t j) {
  if (i >= j || j > traj.steps.size())
    throw ContractError("advantage_report: need 0 <= i < j <= T");
  const State& from = traj.steps[i].state;
  const State& to =
      j < traj.steps.size() ? traj.steps[j].state : traj.final_state;
  AdvantageReport rep;
  rep.from = i;
  rep.to = j;
  rep.a_explicit = advantage_explicit(value, from, to);
  rep.a_implicit = advantage_implicit(pi, ref, traj, i, j, beta);
  if (!std::isfinite(rep.a_explicit) || !std::isfinite(rep.a_implicit))
    throw NumericError("advantage_report: non-finite advantage");
  return rep;
}

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::kGreedy: return "greedy";
    case EvalMode::kBeam: return "beam";
    case EvalMode::kBestOfK: return "bok";
  }
  return "?";
}

EvalReport evaluate(const PolicyTable& pi, const ValueTable* value,
                    const TaskMdp& mdp, EvalMode mode, int b_or_k,
                    int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  if (mode != EvalMode::kGreedy) {
    if (value == nullptr)
      throw ContractError("evaluate: mode requires a value table");
    if (b_or_k < 1) throw ConfigError("evaluate: B/K must be >= 1");
  }

  const auto initial = mdp.initial_states();
  double reward_acc = 0.0;
  double length_acc = 0.0;
  std::size_t successes = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    const State& s0 = initial[static_cast<std::size_t>(ep) % initial.size()];
    Rng rng(derive_seed(seed, "evaluate", static_cast<std::uint64_t>(ep)));
    Trajectory traj;
    switch (mode) {
      case EvalMode::kGreedy:
        traj = greedy_decode(pi, mdp, s0);
        break;
      case EvalMode::kBeam:
        traj = beam_search(pi, *value, mdp, s0, b_or_k, rng);
        break;
      case EvalMode::kBestOfK: {
        State cur = s0;
        while (!cur.terminal) {
          const Action a = best_of_k(pi, *value, mdp, cur, b_or_k, rng);
          const double r = mdp.reward(cur, a);
          State next = mdp.transition(cur, a);
          traj.steps.push_back({std::move(cur), a, r});
          cur = std::move(next);
        }
        traj.final_state = std::move(cur);
        break;
      }
    }
    const double r = traj.terminal_reward();
    if (r > 0.0) ++successes;
    reward_acc += r;
    length_acc += static_cast<double>(traj.size());
  }

  EvalReport report;
  report.mode = mode;
  report.b_or_k = mode == EvalMode::kGreedy ? 0 : b_or_k;
  report.episodes = episodes;
  report.success_rate =
      static_cast<double>(successes) / static_cast<double>(episodes);
  report.mean_reward = reward_acc / static_cast<double>(episodes);
  report.mean_length = length_acc / static_cast<double>(episodes);
  report.seed = seed;
  return report;
}

std::string eval_report_to_jsonl(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(report.mode);
  j["B_or_K"] = report.b_or_k;
  j["episodes"] = report.episodes;
  j["success_rate"] = report.success_rate;
  j["mean_reward"] = report.mean_reward;
  j["mean_length"] = report.mean_length;
  j["seed"] = report.seed;
  return j.dump() + "\n";
}

}  // namespace oreo
