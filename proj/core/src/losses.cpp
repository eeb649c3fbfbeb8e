#include "oreo/losses.hpp"

#include <cmath>

#include "oreo/errors.hpp"
#include "oreo/math.hpp"

namespace oreo {

Variant variant_from_string(const std::string& name) {
  if (name == "token") return Variant::kToken;
  if (name == "step") return Variant::kStep;
  if (name == "response") return Variant::kResponse;
  throw ConfigError("unknown loss variant '" + name + "'");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kToken: return "token";
    case Variant::kStep: return "step";
    case Variant::kResponse: return "response";
  }
  return "?";
}

LossTerms compute_loss_terms(const Trajectory& traj, const PolicyTable& pi,
                             const PolicyTable& ref) {
  if (traj.steps.empty()) throw ContractError("loss on empty trajectory");
  const std::size_t n = traj.steps.size();
  LossTerms terms;
  terms.log_ratios.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    terms.log_ratios[t] =
        log_ratio(pi, ref, traj.steps[t].state, traj.steps[t].action);
  terms.suffix_log_ratios.assign(n + 1, 0.0);
  for (std::size_t t = n; t-- > 0;)
    terms.suffix_log_ratios[t] =
        terms.log_ratios[t] + terms.suffix_log_ratios[t + 1];
  terms.returns = suffix_returns(traj);
  return terms;
}

double consistency_residual(const Trajectory& traj, const ValueTable& value,
                            const LossTerms& terms, double beta,
                            std::size_t t) {
  return value.value(traj.steps[t].state) - terms.returns[t] +
         beta * terms.suffix_log_ratios[t];
}

std::vector<double> consistency_residuals(const Trajectory& traj,
                                          const ValueTable& value,
                                          const PolicyTable& pi,
                                          const PolicyTable& ref,
                                          double beta) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  std::vector<double> out(traj.steps.size());
  for (std::size_t t = 0; t < traj.steps.size(); ++t)
    out[t] = consistency_residual(traj, value, terms, beta, t);
  return out;
}

double value_loss(const Trajectory& traj, const ValueTable& value,
                  const PolicyTable& pi, const PolicyTable& ref, double beta) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  double acc = 0.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const double r = consistency_residual(traj, value, terms, beta, t);
    acc += r * r;
  }
  return acc / static_cast<double>(traj.steps.size());
}

namespace {

double mean_kl_over(const Trajectory& traj, const PolicyTable& pi,
                    const PolicyTable& ref,
                    std::span<const std::size_t> state_indices) {
  double acc = 0.0;
  for (std::size_t t : state_indices)
    acc += kl_to_reference(pi, ref, traj.steps[t].state);
  return acc / static_cast<double>(state_indices.size());
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

double policy_loss_token(const Trajectory& traj, const ValueTable& value,
                         const PolicyTable& pi, const PolicyTable& ref,
                         double beta, double alpha) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  const std::size_t n = traj.steps.size();
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double r = consistency_residual(traj, value, terms, beta, t);
    acc += r * r;
  }
  double loss = acc / static_cast<double>(n);
  if (alpha != 0.0)
    loss += alpha * mean_kl_over(traj, pi, ref, all_indices(n));
  return loss;
}

double policy_loss_step(const Trajectory& traj, const ValueTable& value,
                        const PolicyTable& pi, const PolicyTable& ref,
                        double beta, double alpha) {
  const auto segments = step_segments(traj);
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  double acc = 0.0;
  std::vector<std::size_t> starts;
  starts.reserve(segments.size());
  for (const auto& [begin, end] : segments) {
    starts.push_back(begin);
    const double r = consistency_residual(traj, value, terms, beta, begin);
    acc += r * r;
  }
  double loss = acc / static_cast<double>(segments.size());
  if (alpha != 0.0) loss += alpha * mean_kl_over(traj, pi, ref, starts);
  return loss;
}

double response_residual(const Trajectory& traj, const ValueTable& value,
                         const PolicyTable& pi, const PolicyTable& ref,
                         double beta) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  return consistency_residual(traj, value, terms, beta, 0);
}

double policy_loss_response(const Trajectory& traj, const ValueTable& value,
                            const PolicyTable& pi, const PolicyTable& ref,
                            double beta, double alpha) {
  const double r = response_residual(traj, value, pi, ref, beta);
  double loss = r * r;
  if (alpha != 0.0)
    loss += alpha *
            mean_kl_over(traj, pi, ref, all_indices(traj.steps.size()));
  return loss;
}

void ValueGrad::accumulate(const ValueGrad& other, double scale) {
  for (const auto& [k, v] : other.g) g[k] += scale * v;
}

std::vector<double>& PolicyGrad::row(const StateKey& k,
                                     std::size_t n_actions) {
  auto [it, inserted] = g.try_emplace(k);
  if (inserted) it->second.assign(n_actions, 0.0);
  return it->second;
}

void PolicyGrad::accumulate(const PolicyGrad& other, double scale) {
  for (const auto& [k, grow] : other.g) {
    auto& mine = row(k, grow.size());
    for (std::size_t i = 0; i < grow.size(); ++i) mine[i] += scale * grow[i];
  }
}

void accumulate_value_gradient(const Trajectory& traj, const ValueTable& value,
                               const PolicyTable& pi, const PolicyTable& ref,
                               double beta, double scale, ValueGrad& out) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  const std::size_t n = traj.steps.size();
  const double w = 2.0 * scale / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double r = consistency_residual(traj, value, terms, beta, t);
    if (!std::isfinite(r))
      throw NumericError("value gradient: non-finite residual in state [" +
                         format_tokens(traj.steps[t].state.tokens) + "]");
    out.add(traj.steps[t].state.tokens, w * r);
  }
}

namespace {

// d log pi(a|s) / d z_b = 1[b == a] - pi(b|s), accumulated with weight w.
void add_log_prob_gradient(const PolicyTable& pi, const State& s, Action a,
                           double w, PolicyGrad& out) {
  const PolicyTable::Entry& e = pi.entry(s);
  const std::vector<double> p = softmax(e.logits);
  auto& grow = out.row(s.tokens, p.size());
  for (std::size_t b = 0; b < p.size(); ++b) grow[b] -= w * p[b];
  grow[pi.action_index(s, a)] += w;
}

}  // namespace

void accumulate_kl_gradient(const State& s, const PolicyTable& pi,
                            const PolicyTable& ref, double scale,
                            PolicyGrad& out) {
  const PolicyTable::Entry& ep = pi.entry(s);
  const PolicyTable::Entry& eq = ref.entry(s);
  if (ep.actions != eq.actions)
    throw ContractError("kl gradient: action sets differ in state [" +
                        format_tokens(s.tokens) + "]");
  const std::vector<double> lp = log_softmax(ep.logits);
  const std::vector<double> lq = log_softmax(eq.logits);
  double kl = 0.0;
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) {
    p[i] = std::exp(std::max(lp[i], kLogFloor));
    kl += p[i] == 0.0 ? 0.0 : p[i] * (lp[i] - lq[i]);
  }
  auto& grow = out.row(s.tokens, p.size());
  for (std::size_t b = 0; b < p.size(); ++b)
    grow[b] += scale * p[b] * (lp[b] - lq[b] - kl);
}

void accumulate_policy_gradient(const Trajectory& traj,
                                const ValueTable& value, const PolicyTable& pi,
                                const PolicyTable& ref, double beta,
                                double alpha, Variant variant, double scale,
                                PolicyGrad& out) {
  const LossTerms terms = compute_loss_terms(traj, pi, ref);
  const std::size_t n = traj.steps.size();

  auto residual_at = [&](std::size_t t) {
    const double r = consistency_residual(traj, value, terms, beta, t);
    if (!std::isfinite(r))
      throw NumericError("policy gradient: non-finite residual in state [" +
                         format_tokens(traj.steps[t].state.tokens) + "]");
    return r;
  };

  switch (variant) {
    case Variant::kToken: {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) {
        // Only the step's own log-ratio carries gradient; the future sum
        // sits behind the stop-gradient.
        add_log_prob_gradient(pi, traj.steps[t].state, traj.steps[t].action,
                              scale * inv_n * 2.0 * residual_at(t) * beta,
                              out);
        if (alpha != 0.0)
          accumulate_kl_gradient(traj.steps[t].state, pi, ref,
                                 scale * alpha * inv_n, out);
      }
      break;
    }
    case Variant::kStep: {
      const auto segments = step_segments(traj);
      const double inv_k = 1.0 / static_cast<double>(segments.size());
      for (const auto& [begin, end] : segments) {
        const double r = residual_at(begin);
        for (std::size_t t = begin; t < end; ++t)
          add_log_prob_gradient(pi, traj.steps[t].state, traj.steps[t].action,
                                scale * inv_k * 2.0 * r * beta, out);
        if (alpha != 0.0)
          accumulate_kl_gradient(traj.steps[begin].state, pi, ref,
                                 scale * alpha * inv_k, out);
      }
      break;
    }
    case Variant::kResponse: {
      // No stop-gradient: every action of the trajectory sees the residual.
      const double r = residual_at(0);
      for (std::size_t t = 0; t < n; ++t)
        add_log_prob_gradient(pi, traj.steps[t].state, traj.steps[t].action,
                              scale * 2.0 * r * beta, out);
      if (alpha != 0.0) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t)
          accumulate_kl_gradient(traj.steps[t].state, pi, ref,
                                 scale * alpha * inv_n, out);
      }
      break;
    }
  }
}

double sft_loss(const Trajectory& traj, const PolicyTable& pi) {
  if (traj.steps.empty()) throw ContractError("loss on empty trajectory");
  double acc = 0.0;
  for (const TrajStep& step : traj.steps)
    acc -= pi.log_prob(step.state, step.action);
  return acc / static_cast<double>(traj.steps.size());
}

void accumulate_sft_gradient(const Trajectory& traj, const PolicyTable& pi,
                             double scale, PolicyGrad& out) {
  if (traj.steps.empty()) throw ContractError("loss on empty trajectory");
  const double w = -scale / static_cast<double>(traj.steps.size());
  for (const TrajStep& step : traj.steps)
    add_log_prob_gradient(pi, step.state, step.action, w, out);
}

}  // namespace oreo
