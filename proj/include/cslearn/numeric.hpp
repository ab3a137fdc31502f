#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace cslearn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// log(sum_i exp(v_i)), shifted by the max entry for stability.
inline double log_sum_exp(const VectorXd& v) {
  double mx = v.maxCoeff();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - mx);
  return mx + std::log(acc);
}

inline VectorXd log_softmax(const VectorXd& v) {
  return v.array() - log_sum_exp(v);
}

inline VectorXd softmax(const VectorXd& v) {
  double mx = v.maxCoeff();
  VectorXd e = (v.array() - mx).exp();
  return e / e.sum();
}

/// Argmax with ties broken towards the lowest index.
inline int argmax_lowest(const VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

inline bool all_finite(const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

inline bool all_finite(const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) return false;
    }
  }
  return true;
}

inline void check_finite(const VectorXd& v, const std::string& what) {
  if (!all_finite(v)) throw std::invalid_argument(what + ": non-finite entry");
}

inline void check_finite(const MatrixXd& m, const std::string& what) {
  if (!all_finite(m)) throw std::invalid_argument(what + ": non-finite entry");
}

inline void check_simplex(const VectorXd& p, double tol, const std::string& what) {
  check_finite(p, what);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < -tol) {
      throw std::invalid_argument(what + ": negative entry at index " + std::to_string(i));
    }
  }
  if (std::abs(p.sum() - 1.0) > tol) {
    throw std::invalid_argument(what + ": entries sum to " + std::to_string(p.sum()) +
                                ", expected 1");
  }
}

inline void check_positive(const VectorXd& v, const std::string& what) {
  check_finite(v, what);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] <= 0.0) {
      throw std::invalid_argument(what + ": nonpositive entry at index " + std::to_string(i));
    }
  }
}

inline void check_nonnegative(const VectorXd& v, const std::string& what) {
  check_finite(v, what);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) {
      throw std::invalid_argument(what + ": negative entry at index " + std::to_string(i));
    }
  }
}

namespace detail {

/// Shortest decimal form that parses back to the same double (17 significant
/// digits is always enough for IEEE binary64).
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

}  // namespace detail

}  // namespace cslearn
