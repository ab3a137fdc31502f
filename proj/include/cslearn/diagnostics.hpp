#pragma once

#include <string>
#include <vector>

#include "cslearn/grad_check.hpp"
#include "cslearn/losses.hpp"
#include "cslearn/metrics.hpp"
#include "cslearn/model.hpp"
#include "cslearn/rng.hpp"
#include "cslearn/train.hpp"

namespace cslearn {

// ============================================================================
// Verification suites behind the gradcheck / calibcheck commands. The
// finite-difference oracle and the Bayes-classifier oracle are independent of
// the analytic-gradient and training paths they check.
// ============================================================================

namespace diag {

inline VectorXd random_scores(Rng& rng, int m) {
  VectorXd s(m);
  for (int i = 0; i < m; ++i) s[i] = rng.uniform(-3.0, 3.0);
  return s;
}

inline VectorXd random_positive(Rng& rng, int m, double lo, double hi) {
  VectorXd v(m);
  for (int i = 0; i < m; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

/// Simplex point with every coordinate >= floor.
inline VectorXd random_simplex(Rng& rng, int m, double floor) {
  VectorXd raw = random_positive(rng, m, 0.05, 1.0);
  return (raw / raw.sum()) * (1.0 - m * floor) + VectorXd::Constant(m, floor);
}

inline GainMatrix random_nonneg_gain(Rng& rng, int m) {
  MatrixXd g(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) g(i, j) = rng.uniform(0.0, 1.0);
    g(i, i) += rng.uniform(0.5, 2.0);
  }
  return GainMatrix(std::move(g));
}

}  // namespace diag

// ----------------------------------------------------------------------------
// Gradient suite: analytic gradients vs central finite differences.
// ----------------------------------------------------------------------------

struct GradCheckRow {
  LossKind kind;
  int draws = 0;
  double worst_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 1e-4;
  double step = 1e-5;

  bool pass() const {
    for (const auto& r : rows) {
      if (r.worst_rel_error > tolerance) return false;
    }
    return true;
  }
};

inline GradCheckReport run_grad_suite(int draws_per_kind, std::uint64_t seed) {
  GradCheckReport report;
  Rng rng(seed);

  const LossKind kinds[] = {LossKind::WeightedCE,     LossKind::LogitAdjusted,
                            LossKind::LogitAdjustedPairwise, LossKind::Hybrid,
                            LossKind::Sms,            LossKind::SmsStar,
                            LossKind::SmsHybrid,      LossKind::Distill,
                            LossKind::LaMarginLimit};
  for (LossKind kind : kinds) {
    GradCheckRow row;
    row.kind = kind;
    while (row.draws < draws_per_kind) {
      int m = 2 + static_cast<int>(rng.below(5));
      VectorXd s = diag::random_scores(rng, m);
      int y = static_cast<int>(rng.below(m));

      LossSpec spec;
      VectorXd z;  // distill teacher
      switch (kind) {
        case LossKind::WeightedCE: {
          MatrixXd g(m, m);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) g(i, j) = rng.uniform(0.0, 2.0);
            g(i, i) = rng.uniform(0.5, 2.0);
          }
          spec = LossSpec::weighted(GainMatrix(std::move(g)));
          break;
        }
        case LossKind::LogitAdjusted:
          spec = LossSpec::la(GainMatrix::diagonal(diag::random_positive(rng, m, 0.2, 3.0)));
          break;
        case LossKind::LogitAdjustedPairwise:
          spec = LossSpec::la_pairwise(
              GainMatrix::diagonal(diag::random_positive(rng, m, 0.2, 3.0)));
          break;
        case LossKind::Hybrid: {
          Factorization fac;
          fac.M = MatrixXd(m, m);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) fac.M(i, j) = rng.uniform(0.0, 2.0);
          }
          fac.D = diag::random_positive(rng, m, 0.2, 3.0);
          spec = LossSpec::hybrid_loss(std::move(fac));
          break;
        }
        case LossKind::Sms:
        case LossKind::SmsStar:
        case LossKind::SmsHybrid: {
          SmsParams p;
          p.alpha = diag::random_positive(rng, m, 0.5, 2.0);
          VectorXd ratio = diag::random_positive(rng, m, 0.0, 0.5);
          p.beta = ratio.array() * p.alpha.array();
          p.C = SmsParams::calibrated_c(p.alpha, p.beta);
          if (kind == LossKind::SmsHybrid) {
            p.kappa = VectorXd(m);
            p.kappa_prime = VectorXd(m);
            for (int i = 0; i < m; ++i) {
              double split = rng.uniform();
              p.kappa[i] = split * ratio[i];
              p.kappa_prime[i] = ratio[i] - p.kappa[i];
            }
          }
          spec = LossSpec::sms_loss(std::move(p),
                                    kind == LossKind::Sms      ? SmsVariant::Plain
                                    : kind == LossKind::SmsStar ? SmsVariant::Star
                                                                : SmsVariant::Hybrid);
          break;
        }
        case LossKind::Distill: {
          DistillParams p;
          p.fac.M = MatrixXd(m, m);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) p.fac.M(i, j) = rng.uniform(0.1, 2.0);
          }
          p.fac.D = diag::random_positive(rng, m, 0.2, 3.0);
          p.gamma = rng.uniform(0.0, 1.0);
          z = diag::random_simplex(rng, m, 0.05);
          spec = LossSpec::distill_loss(std::move(p));
          break;
        }
        case LossKind::LaMarginLimit:
          spec = LossSpec::margin_limit(
              GainMatrix::diagonal(diag::random_positive(rng, m, 0.2, 3.0)),
              rng.uniform(0.5, 4.0));
          break;
      }

      const bool distilled = kind == LossKind::Distill;
      LossEval eval = distilled ? evaluate_distilled(spec, z, s) : evaluate(spec, y, s);
      // stay clear of the clamp region: finite differences are meaningless
      // across the kink, and a clamped point has zero subgradient by contract
      if (eval.warnings > 0 || eval.value > 4.6) continue;

      auto f = [&](const VectorXd& x) {
        return (distilled ? evaluate_distilled(spec, z, x) : evaluate(spec, y, x)).value;
      };
      VectorXd fd = finite_diff_grad(f, s, report.step);
      row.worst_rel_error = std::max(row.worst_rel_error, grad_rel_error(eval.grad, fd));
      ++row.draws;
    }
    report.rows.push_back(row);
  }
  return report;
}

// ----------------------------------------------------------------------------
// Calibration suite: on random finite-space problems the population fit of
// each calibrated loss must recover the Bayes classifier and the closed-form
// inner softmax from its optimality conditions.
// ----------------------------------------------------------------------------

struct CalibrationRow {
  std::string family;
  int problems = 0;
  int points = 0;
  int argmax_mismatches = 0;
  double worst_softmax_error = 0.0;
  bool all_converged = true;
};

struct CalibrationReport {
  std::vector<CalibrationRow> rows;
  double softmax_tol = 1e-3;

  bool pass() const {
    for (const auto& r : rows) {
      if (r.argmax_mismatches > 0 || r.worst_softmax_error > softmax_tol || !r.all_converged) {
        return false;
      }
    }
    return true;
  }
};

namespace diag {

constexpr int kCalibPoints = 5;
constexpr int kCalibClasses = 3;

/// 5-point, 3-class table with p entries >= 0.05. Problems where the Bayes
/// decision is a near-tie under G are redrawn: no finite-tolerance fit can
/// pin an argmax across a tie.
inline CondProbTable random_table(Rng& rng, const GainMatrix& G, double margin = 0.05) {
  while (true) {
    CondProbTable table;
    table.probs = MatrixXd(kCalibPoints, kCalibClasses);
    for (int x = 0; x < kCalibPoints; ++x) {
      table.probs.row(x) = random_simplex(rng, kCalibClasses, 0.05);
    }
    VectorXd mass = random_positive(rng, kCalibPoints, 0.5, 1.5);
    table.mass = mass / mass.sum();

    bool separated = true;
    for (int x = 0; x < kCalibPoints && separated; ++x) {
      VectorXd v = G.entries.transpose() * table.probs.row(x).transpose();
      double top = v.maxCoeff();
      int arg = argmax_lowest(v);
      for (int j = 0; j < kCalibClasses; ++j) {
        if (j != arg && v[j] > top * (1.0 - margin)) separated = false;
      }
    }
    if (separated) return table;
  }
}

struct FitCheck {
  int mismatches = 0;
  double worst_softmax_error = 0.0;
  bool converged = true;
};

/// Fits `loss` on the table and compares (a) argmax of the fitted scores vs
/// the Bayes oracle, (b) the loss's inner softmax vs `target` rows.
inline FitCheck check_fit(const LossSpec& loss, const CondProbTable& table, const GainMatrix& G,
                          const MatrixXd& target, const VectorXd& log_shift, double lr,
                          int iters) {
  FitCheck out;
  TabularFitResult fit = tabular_fit(loss, table, lr, iters);
  out.converged = fit.converged;
  const MatrixXd& scores = std::get<TabularModel>(fit.model.impl).scores;
  for (int x = 0; x < table.points(); ++x) {
    int bayes = bayes_classify(G, table.probs.row(x));
    if (argmax_lowest(scores.row(x)) != bayes) ++out.mismatches;
    VectorXd inner = softmax(scores.row(x).transpose() - log_shift);
    out.worst_softmax_error =
        std::max(out.worst_softmax_error, (inner - target.row(x).transpose()).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace diag

inline CalibrationReport run_calibration_suite(int problems_per_family, std::uint64_t seed) {
  CalibrationReport report;
  Rng rng(seed);
  const int m = diag::kCalibClasses;

  auto add = [&](const std::string& family, auto make_problem) {
    CalibrationRow row;
    row.family = family;
    for (int k = 0; k < problems_per_family; ++k) {
      diag::FitCheck check = make_problem();
      row.problems += 1;
      row.points += diag::kCalibPoints;
      row.argmax_mismatches += check.mismatches;
      row.worst_softmax_error = std::max(row.worst_softmax_error, check.worst_softmax_error);
      row.all_converged = row.all_converged && check.converged;
    }
    report.rows.push_back(row);
  };

  add("la_diagonal", [&] {
    GainMatrix G = GainMatrix::diagonal(diag::random_positive(rng, m, 0.3, 3.0));
    CondProbTable table = diag::random_table(rng, G);
    // adjusted softmax recovers p itself
    return diag::check_fit(LossSpec::la(G), table, G, table.probs,
                           G.entries.diagonal().array().log().matrix(), 2.0, 300000);
  });

  for (FactorizeStrategy strategy :
       {FactorizeStrategy::PriorInverse, FactorizeStrategy::DiagonalOfG}) {
    std::string name = strategy == FactorizeStrategy::PriorInverse ? "hybrid_prior_inverse"
                                                                   : "hybrid_diagonal_of_g";
    add(name, [&, strategy] {
      GainMatrix G = diag::random_nonneg_gain(rng, m);
      CondProbTable table = diag::random_table(rng, G);
      Factorization fac = factorize(G, strategy, table.priors());
      MatrixXd target(table.points(), m);
      for (int x = 0; x < table.points(); ++x) {
        VectorXd v = fac.M.transpose() * table.probs.row(x).transpose();
        target.row(x) = v / v.sum();
      }
      return diag::check_fit(LossSpec::hybrid_loss(fac), table, G, target,
                             fac.D.array().log().matrix(), 1.0, 300000);
    });
  }

  add("sms_calibrated", [&] {
    VectorXd alpha = diag::random_positive(rng, m, 0.5, 2.0);
    VectorXd ratio = diag::random_positive(rng, m, 0.0, 0.4);
    VectorXd beta = ratio.array() * alpha.array();
    MatrixXd g = MatrixXd::Zero(m, m);
    g.diagonal() = alpha;
    for (int i = 0; i < m; ++i) g.row(i) += beta.transpose();
    GainMatrix G(std::move(g));
    CondProbTable table = diag::random_table(rng, G);
    SmsParams p = SmsParams::calibrated(alpha, beta);
    MatrixXd target(table.points(), m);
    for (int x = 0; x < table.points(); ++x) {
      target.row(x) =
          (table.probs.row(x).transpose() + (beta.array() / alpha.array()).matrix()) / p.C;
    }
    return diag::check_fit(LossSpec::sms_loss(p, SmsVariant::Plain), table, G, target,
                           alpha.array().log().matrix(), 0.5, 300000);
  });

  for (double gamma : {0.0, 0.5, 1.0}) {
    add("distill_gamma_" + detail::format_double(gamma), [&, gamma] {
      GainMatrix G = diag::random_nonneg_gain(rng, m);
      CondProbTable table = diag::random_table(rng, G);
      DistillParams p;
      p.fac = factorize(G, FactorizeStrategy::PriorInverse, table.priors());
      p.gamma = gamma;
      p.teacher_prior = table.priors();
      // oracle teacher: z(x) = p(.|x); inner softmax target zbar^(1-gamma)
      MatrixXd target(table.points(), m);
      MatrixXd log_zbar(table.points(), m);
      for (int x = 0; x < table.points(); ++x) {
        VectorXd zbar = p.fac.M.transpose() * table.probs.row(x).transpose();
        VectorXd w = zbar.array().pow(1.0 - gamma);
        target.row(x) = w / w.sum();
        log_zbar.row(x) = zbar.array().log();
      }
      LossSpec loss = LossSpec::distill_loss(p);
      // per-point adjusted softmax uses s - log D - gamma log zbar
      diag::FitCheck out;
      TabularFitResult fit = tabular_fit(loss, table, 1.0, 300000);
      out.converged = fit.converged;
      const MatrixXd& scores = std::get<TabularModel>(fit.model.impl).scores;
      for (int x = 0; x < table.points(); ++x) {
        int bayes = bayes_classify(G, table.probs.row(x));
        if (argmax_lowest(scores.row(x)) != bayes) ++out.mismatches;
        VectorXd adj = scores.row(x).transpose() - p.fac.D.array().log().matrix() -
                       gamma * log_zbar.row(x).transpose();
        out.worst_softmax_error = std::max(
            out.worst_softmax_error,
            (softmax(adj) - target.row(x).transpose()).cwiseAbs().maxCoeff());
      }
      return out;
    });
  }

  return report;
}

}  // namespace cslearn
