#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cslearn/numeric.hpp"

namespace cslearn {

/// Central-difference gradient estimate of f at s. The verification oracle for
/// every analytic gradient in the library; keep it free of any loss internals.
template <typename F>
VectorXd finite_diff_grad(F&& f, const VectorXd& s, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  VectorXd x = s;
  VectorXd g(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    x[i] = s[i] + step;
    double fp = f(x);
    x[i] = s[i] - step;
    double fm = f(x);
    x[i] = s[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Worst per-coordinate relative error between two gradients, with the usual
/// unit floor so near-zero coordinates compare absolutely.
inline double grad_rel_error(const VectorXd& analytic, const VectorXd& numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("grad_rel_error: size mismatch");
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace cslearn
