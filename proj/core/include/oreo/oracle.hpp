#pragma once

#include <cstddef>
#include <unordered_map>

#include "oreo/mdp.hpp"
#include "oreo/tables.hpp"

namespace oreo {

/// Exact optimal soft quantities for a KL-regularized objective at inverse
/// temperature 1/beta. q_star rows are aligned with pi_star's action order.
struct OracleResult {
  ValueTable v_star;
  PolicyTable pi_star;
  std::unordered_map<StateKey, std::vector<double>, StateKeyHash> q_star;
  double beta = 1.0;

  double q_at(const State& s, Action a) const;
};

// Backward induction on the finite trajectory tree:
//   Q*(s,a) = r(s,a) + beta*log ref(a|s) + V*(s')
//   V*(s)   = beta * logsumexp_a(Q*(s,a)/beta),   V*(terminal) = 0
//   pi*(a|s) = exp((Q*(s,a) - V*(s)) / beta)
// Memoized depth-first traversal; each state is evaluated exactly once.
OracleResult soft_backward_induction(const TaskMdp& mdp,
                                     const PolicyTable& ref, double beta,
                                     std::size_t state_cap = kDefaultStateCap);

/// Independent check of V*(s) by exhaustive trajectory enumeration:
/// beta * log sum_tau (prod_t ref(a_t|s_t)) * exp(R(tau)/beta).
double brute_force_soft_value(const TaskMdp& mdp, const PolicyTable& ref,
                              double beta, const State& s,
                              std::size_t traj_cap = kDefaultTrajectoryCap);

/// Max over reachable (s, a) of
/// |V(s) - V(s') - r(s,a) + beta*log(pi(a|s)/ref(a|s))|.
double bellman_residual(const PolicyTable& pi, const ValueTable& v,
                        const TaskMdp& mdp, const PolicyTable& ref,
                        double beta, std::size_t state_cap = kDefaultStateCap);

}  // namespace oreo
