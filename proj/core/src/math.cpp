#include "oreo/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oreo/errors.hpp"

namespace oreo {

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("log_sum_exp: empty input");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) {
    if (m == -std::numeric_limits<double>::infinity())
      throw ContractError("log_sum_exp: all terms are -inf");
    throw NumericError("log_sum_exp: non-finite input");
  }
  double acc = 0.0;
  for (double x : xs) acc += std::exp(std::max(x - m, kLogFloor));
  return m + std::log(acc);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double z = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - z;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(m)) {
    if (m == -std::numeric_limits<double>::infinity())
      throw ContractError("softmax: all logits are -inf");
    throw NumericError("softmax: non-finite logit");
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(std::max(logits[i] - m, kLogFloor));
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  // log sigma(x) = -log(1 + exp(-x)) = min(x,0) - log1p(exp(-|x|))
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw ContractError("total_variation: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

}  // namespace oreo
