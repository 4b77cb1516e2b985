#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "rivercast/autodiff.hpp"

namespace rivercast::testing {

using LossFn = std::function<nn::Var(nn::Tape&, nn::ParameterMap&)>;

/// Worst element-wise relative error |g - g_fd| / max(|g|, |g_fd|, floor)
/// between backprop and central finite differences over all parameters.
inline double gradient_check(nn::ParameterMap& params, const LossFn& loss, double eps = 1e-4,
                             double floor = 1e-6) {
  nn::zero_grads(params);
  {
    nn::Tape tape;
    tape.backward(loss(tape, params));
  }
  double worst = 0.0;
  for (auto& [name, t] : params) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      double& v = t.value.data()[i];
      const double keep = v;
      auto at = [&](double delta) {
        v = keep + delta;
        nn::Tape tape;
        return loss(tape, params).scalar();
      };
      // Fourth-order central stencil.
      const double fd = (-at(2 * eps) + 8 * at(eps) - 8 * at(-eps) + at(-2 * eps)) / (12 * eps);
      v = keep;
      const double g = t.grad.data()[i];
      worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor}));
    }
  }
  return worst;
}

}  // namespace rivercast::testing
