#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cslearn/dataset.hpp"
#include "cslearn/metrics.hpp"
#include "cslearn/rng.hpp"

namespace cslearn {

// ============================================================================
// Long-tail Gaussian-mixture testbed. Class-conditional densities are
// isotropic Gaussians, so the true p(y|x) is available in closed form and
// calibration can be checked exactly -- which image data cannot provide.
// ============================================================================

struct SynthSpec {
  int classes = 10;
  int dim = 2;
  double separation = 2.5;   // scale of the class-mean layout
  double sigma = 1.0;        // shared isotropic standard deviation
  double imbalance = 100.0;  // rho = max prior / min prior on the training split
  int n_train = 4000;
  int n_val = 2000;
  int n_test = 2000;
  std::uint64_t seed = 1;
  int grid_points = 225;     // conditional-probability table size

  void validate() const {
    if (classes < 2) throw std::invalid_argument("SynthSpec: need at least two classes");
    if (dim < 1) throw std::invalid_argument("SynthSpec: dim must be positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("SynthSpec: degenerate sigma");
    if (!(imbalance >= 1.0)) throw std::invalid_argument("SynthSpec: imbalance must be >= 1");
    if (n_train < classes || n_val < classes || n_test < classes) {
      throw std::invalid_argument("SynthSpec: each split needs at least one point per class");
    }
    if (grid_points < 1) throw std::invalid_argument("SynthSpec: grid_points must be positive");
  }
};

/// Exponentially decaying priors pi_i proportional to rho^{-(i-1)/(m-1)}.
inline VectorXd longtail_priors(int m, double rho) {
  VectorXd pi(m);
  for (int i = 0; i < m; ++i) {
    pi[i] = m == 1 ? 1.0 : std::pow(rho, -static_cast<double>(i) / (m - 1));
  }
  return pi / pi.sum();
}

/// Largest-remainder apportionment of n samples to the priors; every class
/// gets at least one sample, counts stay within 1 of n * pi_i.
inline std::vector<int> apportion(int n, const VectorXd& pi) {
  const int m = static_cast<int>(pi.size());
  std::vector<int> counts(m);
  std::vector<std::pair<double, int>> rema(m);
  int assigned = 0;
  for (int i = 0; i < m; ++i) {
    double exact = n * pi[i];
    counts[i] = static_cast<int>(std::floor(exact));
    rema[i] = {exact - counts[i], i};
    assigned += counts[i];
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // deterministic tie order
  });
  for (int k = 0; k < n - assigned; ++k) counts[rema[k].second] += 1;
  for (int i = 0; i < m; ++i) {
    if (counts[i] == 0) {
      // steal one from the largest class so every class is represented
      int big = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                 counts.begin());
      counts[big] -= 1;
      counts[i] += 1;
    }
  }
  return counts;
}

/// Isotropic Gaussian mixture with known priors; the Bayes posterior oracle.
struct GaussianMixture {
  MatrixXd means;  // m x d
  double sigma = 1.0;
  VectorXd priors;  // training priors, used in the posterior

  int classes() const { return static_cast<int>(means.rows()); }

  /// Closed-form p(.|x) by Bayes' rule; rows sum to 1 within 1e-12.
  VectorXd posterior(const VectorXd& x) const {
    VectorXd logit(classes());
    for (int i = 0; i < classes(); ++i) {
      double sq = (x - means.row(i).transpose()).squaredNorm();
      logit[i] = std::log(priors[i]) - sq / (2.0 * sigma * sigma);
    }
    return softmax(logit);
  }

  /// Unnormalized marginal density sum_i pi_i N(x; mu_i, sigma^2 I) (constant
  /// factor dropped).
  double marginal(const VectorXd& x) const {
    double acc = 0.0;
    for (int i = 0; i < classes(); ++i) {
      double sq = (x - means.row(i).transpose()).squaredNorm();
      acc += priors[i] * std::exp(-sq / (2.0 * sigma * sigma));
    }
    return acc;
  }

  MatrixXd posterior_batch(const MatrixXd& X) const {
    MatrixXd out(X.rows(), classes());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = posterior(X.row(i));
    return out;
  }
};

struct SynthData {
  Dataset train;
  Dataset val;   // balanced
  Dataset test;  // balanced
  GaussianMixture mixture;
  CondProbTable grid;
  MatrixXd grid_points;
};

namespace detail {

/// Class means on a scaled circle (d >= 2, m > d) or scaled coordinate
/// simplex (m <= d); a line for d = 1.
inline MatrixXd class_means(int m, int d, double separation) {
  MatrixXd means = MatrixXd::Zero(m, d);
  if (m <= d) {
    for (int i = 0; i < m; ++i) means(i, i) = separation;
  } else if (d >= 2) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int i = 0; i < m; ++i) {
      double angle = two_pi * i / m;
      means(i, 0) = separation * std::cos(angle);
      means(i, 1) = separation * std::sin(angle);
    }
  } else {
    for (int i = 0; i < m; ++i) means(i, 0) = separation * (i - 0.5 * (m - 1));
  }
  return means;
}

inline Dataset sample_split(const GaussianMixture& mix, const std::vector<int>& counts, int d,
                            Rng& rng) {
  int n = std::accumulate(counts.begin(), counts.end(), 0);
  MatrixXd features(n, d);
  std::vector<int> labels(n);
  int row = 0;
  for (int y = 0; y < mix.classes(); ++y) {
    for (int k = 0; k < counts[y]; ++k) {
      for (int j = 0; j < d; ++j) {
        features(row, j) = mix.means(y, j) + mix.sigma * rng.normal();
      }
      labels[row] = y;
      ++row;
    }
  }
  // deterministic shuffle so class blocks do not line up with batches
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  MatrixXd shuffled(n, d);
  std::vector<int> shuffled_labels(n);
  for (int i = 0; i < n; ++i) {
    shuffled.row(i) = features.row(order[i]);
    shuffled_labels[i] = labels[order[i]];
  }
  return Dataset::make(std::move(shuffled), std::move(shuffled_labels), mix.classes());
}

}  // namespace detail

inline SynthData make_longtail(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  SynthData out;
  out.mixture.means = detail::class_means(spec.classes, spec.dim, spec.separation);
  out.mixture.sigma = spec.sigma;
  out.mixture.priors = longtail_priors(spec.classes, spec.imbalance);

  VectorXd balanced = VectorXd::Constant(spec.classes, 1.0 / spec.classes);
  out.train = detail::sample_split(out.mixture, apportion(spec.n_train, out.mixture.priors),
                                   spec.dim, rng);
  out.val = detail::sample_split(out.mixture, apportion(spec.n_val, balanced), spec.dim, rng);
  out.test = detail::sample_split(out.mixture, apportion(spec.n_test, balanced), spec.dim, rng);

  // conditional-probability table: a lattice over the mean layout for d <= 2,
  // otherwise points sampled from the training marginal
  if (spec.dim <= 2) {
    int g = std::max(2, static_cast<int>(std::round(std::sqrt(double(spec.grid_points)))));
    double lo0 = out.mixture.means.col(0).minCoeff() - 2.0 * spec.sigma;
    double hi0 = out.mixture.means.col(0).maxCoeff() + 2.0 * spec.sigma;
    double lo1 = 0.0, hi1 = 0.0;
    if (spec.dim == 2) {
      lo1 = out.mixture.means.col(1).minCoeff() - 2.0 * spec.sigma;
      hi1 = out.mixture.means.col(1).maxCoeff() + 2.0 * spec.sigma;
    }
    int rows = spec.dim == 2 ? g * g : g;
    out.grid_points = MatrixXd(rows, spec.dim);
    int r = 0;
    for (int a = 0; a < g; ++a) {
      double x0 = lo0 + (hi0 - lo0) * a / (g - 1);
      if (spec.dim == 1) {
        out.grid_points(r++, 0) = x0;
        continue;
      }
      for (int b = 0; b < g; ++b) {
        out.grid_points(r, 0) = x0;
        out.grid_points(r, 1) = lo1 + (hi1 - lo1) * b / (g - 1);
        ++r;
      }
    }
  } else {
    out.grid_points = MatrixXd(spec.grid_points, spec.dim);
    std::vector<int> counts = apportion(spec.grid_points, out.mixture.priors);
    int r = 0;
    for (int y = 0; y < spec.classes; ++y) {
      for (int k = 0; k < counts[y]; ++k, ++r) {
        for (int j = 0; j < spec.dim; ++j) {
          out.grid_points(r, j) = out.mixture.means(y, j) + spec.sigma * rng.normal();
        }
      }
    }
  }
  out.grid.probs = out.mixture.posterior_batch(out.grid_points);
  VectorXd mass(out.grid_points.rows());
  for (Eigen::Index i = 0; i < out.grid_points.rows(); ++i) {
    mass[i] = out.mixture.marginal(out.grid_points.row(i));
  }
  out.grid.mass = mass / mass.sum();
  out.grid.validate();
  return out;
}

}  // namespace cslearn
