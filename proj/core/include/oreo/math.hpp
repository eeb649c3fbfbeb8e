#pragma once

#include <span>
#include <vector>

namespace oreo {

// Log probabilities are clamped here before exponentiation so extreme
// logit gaps underflow to 0 instead of producing NaN arithmetic.
inline constexpr double kLogFloor = -700.0;

/// Stable log(sum(exp(xs))). Empty input or all -inf is a contract error.
double log_sum_exp(std::span<const double> xs);

/// Stable log-softmax of raw logits (max-subtracted).
std::vector<double> log_softmax(std::span<const double> logits);

/// Stable softmax; entries sum to 1 within a few ulp.
std::vector<double> softmax(std::span<const double> logits);

/// Numerically stable logistic sigmoid.
double sigmoid(double x);

/// Stable log(sigmoid(x)); never overflows for large |x|.
double log_sigmoid(double x);

/// 0.5 * sum |p_i - q_i| over two finite distributions of equal length.
double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace oreo
