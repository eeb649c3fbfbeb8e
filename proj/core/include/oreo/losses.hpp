#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oreo/mdp.hpp"
#include "oreo/tables.hpp"

namespace oreo {

enum class Variant { kToken, kStep, kResponse };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant variant);

// Per-trajectory arrays every loss consumes. suffix_log_ratios has one extra
// trailing 0 so suffix_log_ratios[t] = sum_{i>=t} log_ratio_i for t in [0,T].
struct LossTerms {
  std::vector<double> log_ratios;
  std::vector<double> suffix_log_ratios;
  std::vector<double> returns;
};

LossTerms compute_loss_terms(const Trajectory& traj, const PolicyTable& pi,
                             const PolicyTable& ref);

/// Consistency residual at step t: V(s_t) - R_t + beta * sum_{i>=t} lr_i.
/// The same scalar feeds the value loss, all policy-loss variants, and the
/// telescoped trajectory relation at t = 0.
double consistency_residual(const Trajectory& traj, const ValueTable& value,
                            const LossTerms& terms, double beta,
                            std::size_t t);

/// All residuals of a trajectory, in step order.
std::vector<double> consistency_residuals(const Trajectory& traj,
                                          const ValueTable& value,
                                          const PolicyTable& pi,
                                          const PolicyTable& ref, double beta);

/// Mean squared consistency residual over the trajectory. The policy is a
/// constant with respect to differentiation of this loss.
double value_loss(const Trajectory& traj, const ValueTable& value,
                  const PolicyTable& pi, const PolicyTable& ref, double beta);

// Policy losses. The value table and each step's future log-ratio sum are
// constants under differentiation (the stop-gradient); alpha weighs a mean
// per-state KL(pi || ref) regularizer.
double policy_loss_token(const Trajectory& traj, const ValueTable& value,
                         const PolicyTable& pi, const PolicyTable& ref,
                         double beta, double alpha);
double policy_loss_step(const Trajectory& traj, const ValueTable& value,
                        const PolicyTable& pi, const PolicyTable& ref,
                        double beta, double alpha);
double policy_loss_response(const Trajectory& traj, const ValueTable& value,
                            const PolicyTable& pi, const PolicyTable& ref,
                            double beta, double alpha);

/// The pre-square scalar of the response-level loss; identical to the t = 0
/// consistency residual by construction.
double response_residual(const Trajectory& traj, const ValueTable& value,
                         const PolicyTable& pi, const PolicyTable& ref,
                         double beta);

// Sparse gradients keyed like the tables they update.
struct ValueGrad {
  std::unordered_map<StateKey, double, StateKeyHash> g;

  void add(const StateKey& k, double v) { g[k] += v; }
  void accumulate(const ValueGrad& other, double scale);
};

struct PolicyGrad {
  std::unordered_map<StateKey, std::vector<double>, StateKeyHash> g;

  std::vector<double>& row(const StateKey& k, std::size_t n_actions);
  void accumulate(const PolicyGrad& other, double scale);
};

/// d value_loss / d V(s_t) for one trajectory, accumulated into `out`.
void accumulate_value_gradient(const Trajectory& traj, const ValueTable& value,
                               const PolicyTable& pi, const PolicyTable& ref,
                               double beta, double scale, ValueGrad& out);

/// d policy_loss / d logits for one trajectory under the given variant,
/// honoring the stop-gradient and the constancy of the value table.
void accumulate_policy_gradient(const Trajectory& traj,
                                const ValueTable& value, const PolicyTable& pi,
                                const PolicyTable& ref, double beta,
                                double alpha, Variant variant, double scale,
                                PolicyGrad& out);

/// d KL(pi(.|s) || ref(.|s)) / d logits, accumulated into `out`.
void accumulate_kl_gradient(const State& s, const PolicyTable& pi,
                            const PolicyTable& ref, double scale,
                            PolicyGrad& out);

/// -(1/T) sum_t log pi(a_t|s_t).
double sft_loss(const Trajectory& traj, const PolicyTable& pi);

void accumulate_sft_gradient(const Trajectory& traj, const PolicyTable& pi,
                             double scale, PolicyGrad& out);

}  // namespace oreo
