#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cslearn/gain_matrix.hpp"
#include "cslearn/numeric.hpp"

namespace cslearn {

// ============================================================================
// Cost-sensitive surrogate losses with analytic score gradients.
//
// Every loss here is a function of the softmax of adjusted logits, so all
// values are shift-invariant in the scores; log-sum-exp is always shifted by
// the maximum adjusted logit. Class indices are 0-based.
// ============================================================================

/// Value and gradient of a loss at one score vector. `warnings` counts log
/// arguments that hit the clamp floor (softmax-shifted family only).
struct LossEval {
  double value = 0.0;
  VectorXd grad;
  int warnings = 0;
};

enum class SmsVariant { Plain, Star, Hybrid };

/// Parameters of the softmax-shifted loss family, calibrated for gains of the
/// form diag(alpha) + 1 beta^T.
struct SmsParams {
  VectorXd alpha;        // positive
  VectorXd beta;         // nonnegative
  double C = 1.0;        // positive; calibrated default 1 + sum(beta/alpha)
  VectorXd kappa;        // hybrid variant split, kappa + kappa_prime = beta/alpha
  VectorXd kappa_prime;
  double eps_log = 1e-12;

  static double calibrated_c(const VectorXd& alpha, const VectorXd& beta) {
    return 1.0 + (beta.array() / alpha.array()).sum();
  }

  /// Calibrated parameters with the hybrid split kappa = 0 (pure inner shift).
  static SmsParams calibrated(const VectorXd& alpha, const VectorXd& beta) {
    SmsParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.C = calibrated_c(alpha, beta);
    p.kappa = VectorXd::Zero(alpha.size());
    p.kappa_prime = beta.array() / alpha.array();
    return p;
  }

  void validate(SmsVariant variant) const {
    check_positive(alpha, "SmsParams.alpha");
    check_nonnegative(beta, "SmsParams.beta");
    if (beta.size() != alpha.size()) throw std::invalid_argument("SmsParams: size mismatch");
    if (!(C > 0.0)) throw std::invalid_argument("SmsParams: C must be positive");
    if (!(eps_log > 0.0)) throw std::invalid_argument("SmsParams: eps_log must be positive");
    if (variant == SmsVariant::Hybrid) {
      if (kappa.size() != alpha.size() || kappa_prime.size() != alpha.size()) {
        throw std::invalid_argument("SmsParams: hybrid variant needs kappa, kappa_prime");
      }
      VectorXd ratio = beta.array() / alpha.array();
      for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        if (std::abs(kappa[i] + kappa_prime[i] - ratio[i]) > 1e-12) {
          throw std::invalid_argument("SmsParams: kappa + kappa_prime != beta/alpha at index " +
                                      std::to_string(i));
        }
      }
    }
  }
};

/// Parameters of the distillation loss: G = M diag(D) factorization, the
/// interpolation gamma, and the teacher prior the caller built D from.
struct DistillParams {
  Factorization fac;
  double gamma = 0.0;         // in [0, 1]
  VectorXd teacher_prior;     // on the simplex

  void validate() const {
    fac.validate();
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
      throw std::invalid_argument("DistillParams: gamma must lie in [0, 1]");
    }
    if (teacher_prior.size() > 0) {
      check_simplex(teacher_prior, 1e-9, "DistillParams.teacher_prior");
    }
  }
};

namespace detail {

inline void check_label(int y, Eigen::Index m) {
  if (y < 0 || y >= m) {
    throw std::invalid_argument("loss: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(m) + ")");
  }
}

inline void check_diagonal_positive(const GainMatrix& G) {
  if (!G.is_diagonal()) throw std::invalid_argument("loss: gain matrix must be diagonal");
  for (int i = 0; i < G.classes(); ++i) {
    if (!(G.entries(i, i) > 0.0)) {
      throw std::invalid_argument("loss: nonpositive gain diagonal at class " + std::to_string(i));
    }
  }
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Re-weighted cross-entropy: value = -sum_i G(y,i) log softmax_i(s).
// ----------------------------------------------------------------------------
inline LossEval weighted_ce(int y, const VectorXd& s, const GainMatrix& G) {
  G.validate();
  detail::check_label(y, s.size());
  check_finite(s, "weighted_ce: scores");
  if (G.classes() != s.size()) throw std::invalid_argument("weighted_ce: dimension mismatch");

  VectorXd ls = log_softmax(s);
  VectorXd q = ls.array().exp();
  VectorXd row = G.entries.row(y);
  LossEval out;
  out.value = -row.dot(ls);
  out.grad = row.sum() * q - row;
  return out;
}

// ----------------------------------------------------------------------------
// Logit-adjusted cross-entropy for a diagonal gain: shift the logits by
// -log G_yy, then take standard cross-entropy.
// ----------------------------------------------------------------------------
inline LossEval logit_adjusted(int y, const VectorXd& s, const GainMatrix& G) {
  detail::check_label(y, s.size());
  check_finite(s, "logit_adjusted: scores");
  detail::check_diagonal_positive(G);
  if (G.classes() != s.size()) throw std::invalid_argument("logit_adjusted: dimension mismatch");

  VectorXd adjusted = s - G.entries.diagonal().array().log().matrix();
  VectorXd ls = log_softmax(adjusted);
  LossEval out;
  out.value = -ls[y];
  out.grad = ls.array().exp();
  out.grad[y] -= 1.0;
  return out;
}

// ----------------------------------------------------------------------------
// Pair-wise form of the logit-adjusted loss:
//   log(1 + sum_{j != y} exp(delta_yj - (s_y - s_j))),
// with relative margins delta_yj = log(G_yy / G_jj). Algebraically identical
// to logit_adjusted; kept as a second route for cross-checking.
// ----------------------------------------------------------------------------
inline LossEval logit_adjusted_pairwise(int y, const VectorXd& s, const GainMatrix& G) {
  detail::check_label(y, s.size());
  check_finite(s, "logit_adjusted_pairwise: scores");
  detail::check_diagonal_positive(G);
  if (G.classes() != s.size()) {
    throw std::invalid_argument("logit_adjusted_pairwise: dimension mismatch");
  }

  const Eigen::Index m = s.size();
  double log_gy = std::log(G.entries(y, y));
  VectorXd exponents(m);  // j = y contributes exp(0) = 1
  for (Eigen::Index j = 0; j < m; ++j) {
    exponents[j] = j == y ? 0.0
                          : (log_gy - std::log(G.entries(j, j))) - (s[y] - s[j]);
  }
  double lse = log_sum_exp(exponents);
  LossEval out;
  out.value = lse;
  out.grad = (exponents.array() - lse).exp();
  out.grad[y] -= 1.0;
  return out;
}

// ----------------------------------------------------------------------------
// Hybrid loss for a factorized gain G = M diag(D): the D part enters as a
// logit shift, the M part as an outer weighting.
// ----------------------------------------------------------------------------
inline LossEval hybrid(int y, const VectorXd& s, const Factorization& fac) {
  fac.validate();
  detail::check_label(y, s.size());
  check_finite(s, "hybrid: scores");
  if (fac.classes() != s.size()) throw std::invalid_argument("hybrid: dimension mismatch");

  VectorXd adjusted = s - fac.D.array().log().matrix();
  VectorXd ls = log_softmax(adjusted);
  VectorXd q = ls.array().exp();
  VectorXd row = fac.M.row(y);
  LossEval out;
  out.value = -row.dot(ls);
  out.grad = row.sum() * q - row;
  return out;
}

// ----------------------------------------------------------------------------
// Softmax-shifted loss family for gains diag(alpha) + 1 beta^T. The Plain form
// can drive the log argument nonpositive away from the optimum; arguments are
// clamped at eps_log with a zero subgradient, counted in LossEval.warnings.
// ----------------------------------------------------------------------------
inline LossEval sms(int y, const VectorXd& s, const SmsParams& p, SmsVariant variant) {
  p.validate(variant);
  detail::check_label(y, s.size());
  check_finite(s, "sms: scores");
  if (p.alpha.size() != s.size()) throw std::invalid_argument("sms: dimension mismatch");

  const Eigen::Index m = s.size();
  VectorXd u = softmax(s - p.alpha.array().log().matrix());

  LossEval out;
  out.grad = VectorXd::Zero(m);

  if (variant == SmsVariant::Hybrid) {
    double max_kp = p.kappa_prime.maxCoeff();
    // value = -sum_i (1(y==i) + kappa_i) log(C u_i + max_j kappa'_j - kappa'_i)
    VectorXd coeff = VectorXd::Zero(m);  // c_i = w_i C u_i / arg_i, zero when clamped
    for (Eigen::Index i = 0; i < m; ++i) {
      double w = (i == y ? 1.0 : 0.0) + p.kappa[i];
      if (w == 0.0) continue;
      double arg = p.C * u[i] + max_kp - p.kappa_prime[i];
      if (arg < p.eps_log) {
        arg = p.eps_log;
        ++out.warnings;
      } else {
        coeff[i] = w * p.C * u[i] / arg;
      }
      out.value -= w * std::log(arg);
    }
    out.grad = coeff.sum() * u - coeff;
    return out;
  }

  double shift = variant == SmsVariant::Star
                     ? (p.beta.array() / p.alpha.array()).maxCoeff() - p.beta[y] / p.alpha[y]
                     : -p.beta[y] / p.alpha[y];
  double arg = p.C * u[y] + shift;
  if (arg < p.eps_log) {
    out.value = -std::log(p.eps_log);
    ++out.warnings;  // zero subgradient through the clamp
    return out;
  }
  out.value = -std::log(arg);
  double c = p.C * u[y] / arg;
  out.grad = c * u;
  out.grad[y] -= c;
  return out;
}

// ----------------------------------------------------------------------------
// Distillation loss: with zbar = M^T z,
//   value = -sum_y zbar_y^(1-gamma) log softmax_y(s - log D - gamma log zbar).
// Zero entries of zbar contribute zero (0 log 0 = 0) and leave the adjusted
// softmax when gamma > 0; negative entries are an error.
// ----------------------------------------------------------------------------
inline LossEval distill(const VectorXd& z, const VectorXd& s, const DistillParams& p) {
  p.validate();
  check_finite(s, "distill: scores");
  check_simplex(z, 1e-9, "distill: teacher distribution");
  const Eigen::Index m = s.size();
  if (p.fac.classes() != m || z.size() != m) {
    throw std::invalid_argument("distill: dimension mismatch");
  }

  VectorXd zbar = p.fac.M.transpose() * z;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (zbar[k] < 0.0) {
      throw std::invalid_argument("distill: transformed teacher weight negative for class " +
                                  std::to_string(k) + " (choose a factorization with M >= 0)");
    }
  }

  const bool drop_zeros = p.gamma > 0.0;
  std::vector<Eigen::Index> support;
  support.reserve(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!drop_zeros || zbar[k] > 0.0) support.push_back(k);
  }
  if (support.empty()) throw std::invalid_argument("distill: transformed teacher weights all zero");

  VectorXd adjusted(support.size());
  VectorXd weight(support.size());
  for (std::size_t idx = 0; idx < support.size(); ++idx) {
    Eigen::Index k = support[idx];
    double lz = zbar[k] > 0.0 ? std::log(zbar[k]) : 0.0;  // weight is 0 anyway when zbar = 0
    adjusted[idx] = s[k] - std::log(p.fac.D[k]) - p.gamma * lz;
    weight[idx] = zbar[k] > 0.0 ? std::pow(zbar[k], 1.0 - p.gamma) : 0.0;
  }
  VectorXd ls = log_softmax(adjusted);
  VectorXd q = ls.array().exp();

  LossEval out;
  out.grad = VectorXd::Zero(m);
  double wsum = weight.sum();
  for (std::size_t idx = 0; idx < support.size(); ++idx) {
    out.value -= weight[idx] * ls[idx];
    out.grad[support[idx]] = wsum * q[idx] - weight[idx];
  }
  return out;
}

// ----------------------------------------------------------------------------
// Margin-limiting form of the logit-adjusted loss:
//   (1/gamma) log sum_j exp(gamma (delta_yj - (s_y - s_j))),
// which tends to max_j (delta_yj - (s_y - s_j)) as gamma -> inf and reproduces
// the pair-wise form at gamma = 1 (the j = y term supplies the "+1").
// ----------------------------------------------------------------------------
inline LossEval la_margin_limit_eval(int y, const VectorXd& s, const GainMatrix& G,
                                     double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("la_margin_limit: gamma must be positive");
  detail::check_label(y, s.size());
  check_finite(s, "la_margin_limit: scores");
  detail::check_diagonal_positive(G);
  if (G.classes() != s.size()) throw std::invalid_argument("la_margin_limit: dimension mismatch");

  const Eigen::Index m = s.size();
  double log_gy = std::log(G.entries(y, y));
  VectorXd exponents(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double margin = j == y ? 0.0 : (log_gy - std::log(G.entries(j, j))) - (s[y] - s[j]);
    exponents[j] = gamma * margin;
  }
  double lse = log_sum_exp(exponents);
  VectorXd w = (exponents.array() - lse).exp();
  LossEval out;
  out.value = lse / gamma;
  out.grad = w;
  out.grad[y] = w[y] - 1.0;
  return out;
}

inline double la_margin_limit(int y, const VectorXd& s, const GainMatrix& G, double gamma) {
  return la_margin_limit_eval(y, s, G, gamma).value;
}

// ============================================================================
// Tagged loss description, usable as an experiment config value.
// ============================================================================

enum class LossKind {
  WeightedCE,
  LogitAdjusted,
  LogitAdjustedPairwise,
  Hybrid,
  Sms,
  SmsStar,
  SmsHybrid,
  Distill,
  LaMarginLimit,
};

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::WeightedCE: return "weighted_ce";
    case LossKind::LogitAdjusted: return "logit_adjusted";
    case LossKind::LogitAdjustedPairwise: return "logit_adjusted_pairwise";
    case LossKind::Hybrid: return "hybrid";
    case LossKind::Sms: return "sms";
    case LossKind::SmsStar: return "sms_star";
    case LossKind::SmsHybrid: return "sms_hybrid";
    case LossKind::Distill: return "distill";
    case LossKind::LaMarginLimit: return "la_margin_limit";
  }
  return "?";
}

inline LossKind loss_kind_from_name(const std::string& name) {
  for (LossKind k : {LossKind::WeightedCE, LossKind::LogitAdjusted,
                     LossKind::LogitAdjustedPairwise, LossKind::Hybrid, LossKind::Sms,
                     LossKind::SmsStar, LossKind::SmsHybrid, LossKind::Distill,
                     LossKind::LaMarginLimit}) {
    if (name == loss_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown loss kind: " + name);
}

struct LossSpec {
  LossKind kind = LossKind::WeightedCE;
  GainMatrix gain;        // WeightedCE / LogitAdjusted(+Pairwise) / LaMarginLimit
  Factorization fac;      // Hybrid
  SmsParams sms;          // Sms / SmsStar / SmsHybrid
  DistillParams dis;      // Distill
  double gamma_limit = 1.0;

  static LossSpec standard_ce(int m) { return weighted(GainMatrix::identity(m)); }

  static LossSpec weighted(GainMatrix g) {
    LossSpec spec;
    spec.kind = LossKind::WeightedCE;
    spec.gain = std::move(g);
    return spec;
  }

  static LossSpec la(GainMatrix g) {
    LossSpec spec;
    spec.kind = LossKind::LogitAdjusted;
    spec.gain = std::move(g);
    return spec;
  }

  static LossSpec la_pairwise(GainMatrix g) {
    LossSpec spec;
    spec.kind = LossKind::LogitAdjustedPairwise;
    spec.gain = std::move(g);
    return spec;
  }

  static LossSpec hybrid_loss(Factorization f) {
    LossSpec spec;
    spec.kind = LossKind::Hybrid;
    spec.fac = std::move(f);
    return spec;
  }

  static LossSpec sms_loss(SmsParams p, SmsVariant variant) {
    LossSpec spec;
    spec.kind = variant == SmsVariant::Plain  ? LossKind::Sms
              : variant == SmsVariant::Star   ? LossKind::SmsStar
                                              : LossKind::SmsHybrid;
    spec.sms = std::move(p);
    return spec;
  }

  static LossSpec distill_loss(DistillParams p) {
    LossSpec spec;
    spec.kind = LossKind::Distill;
    spec.dis = std::move(p);
    return spec;
  }

  static LossSpec margin_limit(GainMatrix g, double gamma) {
    LossSpec spec;
    spec.kind = LossKind::LaMarginLimit;
    spec.gain = std::move(g);
    spec.gamma_limit = gamma;
    return spec;
  }

  SmsVariant sms_variant() const {
    switch (kind) {
      case LossKind::Sms: return SmsVariant::Plain;
      case LossKind::SmsStar: return SmsVariant::Star;
      case LossKind::SmsHybrid: return SmsVariant::Hybrid;
      default: throw std::logic_error("not an SMS loss");
    }
  }

  void validate() const {
    switch (kind) {
      case LossKind::WeightedCE:
        gain.validate();
        break;
      case LossKind::LogitAdjusted:
      case LossKind::LogitAdjustedPairwise:
        detail::check_diagonal_positive(gain);
        break;
      case LossKind::Hybrid:
        fac.validate();
        break;
      case LossKind::Sms:
      case LossKind::SmsStar:
      case LossKind::SmsHybrid:
        sms.validate(sms_variant());
        break;
      case LossKind::Distill:
        dis.validate();
        break;
      case LossKind::LaMarginLimit:
        detail::check_diagonal_positive(gain);
        if (!(gamma_limit > 0.0)) throw std::invalid_argument("LossSpec: gamma_limit <= 0");
        break;
    }
  }
};

/// Evaluates a loss spec at (label, scores). Distill specs treat the label as
/// a one-hot teacher.
inline LossEval evaluate(const LossSpec& spec, int y, const VectorXd& s) {
  switch (spec.kind) {
    case LossKind::WeightedCE: return weighted_ce(y, s, spec.gain);
    case LossKind::LogitAdjusted: return logit_adjusted(y, s, spec.gain);
    case LossKind::LogitAdjustedPairwise: return logit_adjusted_pairwise(y, s, spec.gain);
    case LossKind::Hybrid: return hybrid(y, s, spec.fac);
    case LossKind::Sms: return sms(y, s, spec.sms, SmsVariant::Plain);
    case LossKind::SmsStar: return sms(y, s, spec.sms, SmsVariant::Star);
    case LossKind::SmsHybrid: return sms(y, s, spec.sms, SmsVariant::Hybrid);
    case LossKind::Distill: {
      VectorXd z = VectorXd::Zero(s.size());
      detail::check_label(y, s.size());
      z[y] = 1.0;
      return distill(z, s, spec.dis);
    }
    case LossKind::LaMarginLimit: return la_margin_limit_eval(y, s, spec.gain, spec.gamma_limit);
  }
  throw std::logic_error("unreachable");
}

/// Evaluates a loss spec against a teacher distribution z. The distillation
/// loss consumes z directly; every label loss is averaged under z, summed in
/// index order.
inline LossEval evaluate_distilled(const LossSpec& spec, const VectorXd& z, const VectorXd& s) {
  if (spec.kind == LossKind::Distill) return distill(z, s, spec.dis);
  check_simplex(z, 1e-9, "evaluate_distilled: teacher distribution");
  LossEval out;
  out.grad = VectorXd::Zero(s.size());
  for (Eigen::Index y = 0; y < z.size(); ++y) {
    if (z[y] == 0.0) continue;
    LossEval e = evaluate(spec, static_cast<int>(y), s);
    out.value += z[y] * e.value;
    out.grad += z[y] * e.grad;
    out.warnings += e.warnings;
  }
  return out;
}

// ----------------------------------------------------------------------------
// JSON form: kind tag plus parameter arrays.
// ----------------------------------------------------------------------------

namespace detail {

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const LossSpec& spec) {
  nlohmann::json j;
  j["kind"] = loss_kind_name(spec.kind);
  switch (spec.kind) {
    case LossKind::WeightedCE:
    case LossKind::LogitAdjusted:
    case LossKind::LogitAdjustedPairwise:
      j["gain"] = to_json(spec.gain);
      break;
    case LossKind::LaMarginLimit:
      j["gain"] = to_json(spec.gain);
      j["gamma_limit"] = spec.gamma_limit;
      break;
    case LossKind::Hybrid:
      j["m"] = to_json(GainMatrix(spec.fac.M));
      j["d"] = detail::vector_to_json(spec.fac.D);
      break;
    case LossKind::Sms:
    case LossKind::SmsStar:
    case LossKind::SmsHybrid:
      j["alpha"] = detail::vector_to_json(spec.sms.alpha);
      j["beta"] = detail::vector_to_json(spec.sms.beta);
      j["c"] = spec.sms.C;
      j["eps_log"] = spec.sms.eps_log;
      if (spec.kind == LossKind::SmsHybrid) {
        j["kappa"] = detail::vector_to_json(spec.sms.kappa);
        j["kappa_prime"] = detail::vector_to_json(spec.sms.kappa_prime);
      }
      break;
    case LossKind::Distill:
      j["m"] = to_json(GainMatrix(spec.dis.fac.M));
      j["d"] = detail::vector_to_json(spec.dis.fac.D);
      j["gamma"] = spec.dis.gamma;
      j["teacher_prior"] = detail::vector_to_json(spec.dis.teacher_prior);
      break;
  }
  return j;
}

inline LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec spec;
  spec.kind = loss_kind_from_name(j.at("kind").get<std::string>());
  switch (spec.kind) {
    case LossKind::WeightedCE:
    case LossKind::LogitAdjusted:
    case LossKind::LogitAdjustedPairwise:
      spec.gain = gain_from_json(j.at("gain"));
      break;
    case LossKind::LaMarginLimit:
      spec.gain = gain_from_json(j.at("gain"));
      spec.gamma_limit = j.at("gamma_limit").get<double>();
      break;
    case LossKind::Hybrid:
      spec.fac.M = gain_from_json(j.at("m")).entries;
      spec.fac.D = detail::vector_from_json(j.at("d"));
      break;
    case LossKind::Sms:
    case LossKind::SmsStar:
    case LossKind::SmsHybrid:
      spec.sms.alpha = detail::vector_from_json(j.at("alpha"));
      spec.sms.beta = detail::vector_from_json(j.at("beta"));
      spec.sms.C = j.at("c").get<double>();
      spec.sms.eps_log = j.at("eps_log").get<double>();
      if (spec.kind == LossKind::SmsHybrid) {
        spec.sms.kappa = detail::vector_from_json(j.at("kappa"));
        spec.sms.kappa_prime = detail::vector_from_json(j.at("kappa_prime"));
      }
      break;
    case LossKind::Distill:
      spec.dis.fac.M = gain_from_json(j.at("m")).entries;
      spec.dis.fac.D = detail::vector_from_json(j.at("d"));
      spec.dis.gamma = j.at("gamma").get<double>();
      spec.dis.teacher_prior = detail::vector_from_json(j.at("teacher_prior"));
      break;
  }
  spec.validate();
  return spec;
}

}  // namespace cslearn
