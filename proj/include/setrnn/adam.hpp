#ifndef SETRNN_ADAM_HPP
#define SETRNN_ADAM_HPP

#include <cmath>
#include <concepts>
#include <cstdint>

#include "setrnn/parameters.hpp"

namespace setrnn {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <std::floating_point Real>
struct AdamState {
  ModelParameters<Real> first_moment;
  ModelParameters<Real> second_moment;
  std::int64_t step = 0;

  static AdamState fresh(const ModelParameters<Real>& like) { return {like.zeros_like(), like.zeros_like(), 0}; }
};

/// One bias-corrected Adam step, in place.
template <std::floating_point Real>
void adam_update(ModelParameters<Real>& params, const ModelParameters<Real>& grad, AdamState<Real>& state,
                 const AdamConfig& cfg) {
  params.check_same_shape(grad);
  params.check_same_shape(state.first_moment);
  params.check_same_shape(state.second_moment);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Real c1 = static_cast<Real>(1.0 - std::pow(cfg.beta1, t));
  const Real c2 = static_cast<Real>(1.0 - std::pow(cfg.beta2, t));
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  const Real lr = static_cast<Real>(cfg.learning_rate);
  const Real eps = static_cast<Real>(cfg.epsilon);
  for (int i = 0; i < static_cast<int>(params.num_blocks()); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grad[i];
    m = b1 * m + (Real(1) - b1) * g;
    v = b2 * v + (Real(1) - b2) * g.cwiseProduct(g);
    auto& p = params[i];
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const Real mhat = m.data()[k] / c1;
      const Real vhat = v.data()[k] / c2;
      p.data()[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace setrnn

#endif  // SETRNN_ADAM_HPP
