#ifndef SETRNN_MATH_HPP
#define SETRNN_MATH_HPP

#include <algorithm>
#include <cmath>
#include <span>

#include "setrnn/types.hpp"

namespace setrnn {

// log(sum_i exp(x_i)), shifted by the maximum. Empty input or all -inf gives -inf.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double max_x = *std::max_element(xs.begin(), xs.end());
  if (max_x == kNegInf) return kNegInf;
  if (!std::isfinite(max_x)) return max_x;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - max_x);
  return max_x + std::log(sum);
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace setrnn

#endif  // SETRNN_MATH_HPP
