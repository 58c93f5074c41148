#pragma once

// Linear learners: multinomial GLM and one-vs-rest logistic regression fitted
// by IRLS (Newton on the ridge-penalized log-likelihood), and the Gaussian
// identity-link GLM for treatment length.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "drugsurv/error.hpp"
#include "drugsurv/learn/artifact.hpp"

namespace drugsurv {

/// Result of a softmax Newton fit. `beta` has one row per non-reference
/// class; the reference class (last column of the targets) is pinned to 0.
struct SoftmaxFit {
  Eigen::MatrixXd beta;
  int iterations = 0;
  double objective = 0.0;
  double lambda_used = 0.0;
  bool converged = false;
  bool singular = false;
  bool non_convergence = false;
};

namespace detail {

/// Design matrix with a leading column of ones.
inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

/// Row-wise class probabilities for `beta` (reference score 0).
inline Eigen::MatrixXd softmax_probs(const Eigen::MatrixXd& design, const Eigen::MatrixXd& beta) {
  const Eigen::Index n = design.rows();
  const Eigen::Index m = beta.rows();
  Eigen::MatrixXd scores(n, m + 1);
  scores.leftCols(m) = design * beta.transpose();
  scores.col(m).setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - mx).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

/// Penalized multinomial log-likelihood; intercepts are not penalized.
inline double softmax_objective(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets,
                                const Eigen::MatrixXd& beta, double lambda) {
  const Eigen::Index n = design.rows();
  const Eigen::Index m = beta.rows();
  double ll = 0.0;
  Eigen::VectorXd s(m + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.head(m) = beta * design.row(i).transpose();
    s[m] = 0.0;
    const double mx = s.maxCoeff();
    const double lse = mx + std::log((s.array() - mx).exp().sum());
    for (Eigen::Index k = 0; k <= m; ++k)
      if (targets(i, k) != 0.0) ll += targets(i, k) * (s[k] - lse);
  }
  if (beta.cols() > 1) ll -= 0.5 * lambda * beta.rightCols(beta.cols() - 1).squaredNorm();
  return ll;
}

}  // namespace detail

/// Newton / IRLS maximization of the ridge-penalized multinomial
/// log-likelihood. `targets` is n x c with rows on the simplex (one-hot for
/// hard labels); its last column is the reference class.
///
/// Each accepted step does not decrease the objective (step halving).
/// Iteration stops once the relative objective change drops below
/// `tolerance`. When the Newton system is numerically singular the ridge
/// penalty is raised and the fit continues; `singular` records that.
inline SoftmaxFit fit_softmax_newton(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets,
                                     double lambda, int max_iterations, double tolerance) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  const Eigen::Index m = targets.cols() - 1;
  SoftmaxFit fit;
  fit.beta = Eigen::MatrixXd::Zero(m, p);
  fit.lambda_used = lambda;
  if (m <= 0) {
    fit.converged = true;
    return fit;
  }

  const Eigen::Index dim = m * p;
  double objective = detail::softmax_objective(design, targets, fit.beta, fit.lambda_used);
  double last_rel_change = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::MatrixXd prob = detail::softmax_probs(design, fit.beta);

    // Gradient of the penalized log-likelihood.
    auto gradient = [&] {
      Eigen::VectorXd g(dim);
      for (Eigen::Index k = 0; k < m; ++k) {
        Eigen::VectorXd gk = design.transpose() * (targets.col(k) - prob.col(k));
        gk.tail(p - 1) -= fit.lambda_used * fit.beta.row(k).tail(p - 1).transpose();
        g.segment(k * p, p) = gk;
      }
      return g;
    };
    Eigen::VectorXd grad = gradient();
    if (grad.lpNorm<Eigen::Infinity>() < 1e-13 * std::max<double>(1.0, static_cast<double>(n))) {
      fit.converged = true;
      break;
    }

    // Negative Hessian, block (k, l) = X' diag(p_k (delta_kl - p_l)) X.
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index k = 0; k < m; ++k) {
      for (Eigen::Index l = k; l < m; ++l) {
        Eigen::VectorXd w = prob.col(k).cwiseProduct(
            (k == l ? Eigen::VectorXd::Ones(n) : Eigen::VectorXd::Zero(n)) - prob.col(l));
        const Eigen::MatrixXd block = design.transpose() * w.asDiagonal() * design;
        hess.block(k * p, l * p, p, p) = block;
        if (l != k) hess.block(l * p, k * p, p, p) = block.transpose();
      }
    }

    Eigen::VectorXd step;
    for (int attempt = 0;; ++attempt) {
      Eigen::MatrixXd h = hess;
      for (Eigen::Index k = 0; k < m; ++k)
        for (Eigen::Index j = 1; j < p; ++j) h(k * p + j, k * p + j) += fit.lambda_used;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      const Eigen::VectorXd diag = ldlt.vectorD();
      const double dmax = diag.cwiseAbs().maxCoeff();
      const bool ok = ldlt.info() == Eigen::Success && diag.minCoeff() > 1e-12 * std::max(dmax, 1e-300);
      if (ok) {
        step = ldlt.solve(grad);
        break;
      }
      if (attempt > 40) throw Error(Errc::SingularSystem, "Newton system stayed singular");
      fit.singular = true;
      const double scale = std::max(1e-300, hess.diagonal().cwiseAbs().maxCoeff());
      fit.lambda_used = std::max(10.0 * fit.lambda_used, 1e-10 * scale);
      // The objective changes with the penalty; re-evaluate the incumbent.
      objective = detail::softmax_objective(design, targets, fit.beta, fit.lambda_used);
      grad = gradient();
    }

    // Step halving keeps the objective non-decreasing.
    double t = 1.0;
    Eigen::MatrixXd candidate;
    double cand_obj = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      candidate = fit.beta;
      for (Eigen::Index k = 0; k < m; ++k)
        candidate.row(k) += t * step.segment(k * p, p).transpose();
      cand_obj = detail::softmax_objective(design, targets, candidate, fit.lambda_used);
      if (cand_obj >= objective) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    fit.iterations = iter + 1;
    if (!accepted) {
      // No ascent direction left at working precision.
      fit.converged = true;
      break;
    }
    const double change = cand_obj - objective;
    last_rel_change = std::abs(change) / std::max(std::abs(objective), 1e-12);
    fit.beta = std::move(candidate);
    objective = cand_obj;
    if (last_rel_change < tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.objective = objective;
  if (!fit.converged && last_rel_change > 100.0 * tolerance) fit.non_convergence = true;
  return fit;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::array<bool, kNumClasses> active_labels(const std::vector<OutcomeLabel>& labels) {
  std::array<bool, kNumClasses> active{};
  for (auto l : labels) active[label_index(l)] = true;
  return active;
}

inline void check_rows(const FeatureMatrix& m) {
  if (m.rows() == 0) throw Error(Errc::EmptyCohort, "no training rows");
  if (m.labels.size() != m.rows())
    throw Error(Errc::LengthMismatch, "label vector length differs from row count");
}

inline ModelArtifact blank_artifact(ModelKind kind, const ModelConfig& cfg, const FeatureMatrix& m) {
  ModelArtifact a;
  a.kind = kind;
  a.config = cfg;
  a.config.kind = kind;
  a.fingerprint = m.fingerprint;
  a.width = m.cols();
  return a;
}

inline void record_flags(TrainingMeta& meta, const SoftmaxFit& f) {
  if (f.non_convergence && !meta.has_flag("NonConvergence")) meta.flags.push_back("NonConvergence");
  if (f.singular && !meta.has_flag("SingularSystem")) meta.flags.push_back("SingularSystem");
}

}  // namespace detail

/// Multinomial (softmax) GLM. Reference class is Continue when present,
/// otherwise the last label seen; labels absent from training keep a zero
/// coefficient row and probability 0.
inline ModelArtifact fit_glm(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  detail::check_rows(m);
  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::Glm, cfg, m);
  a.active = detail::active_labels(m.labels);

  std::vector<std::size_t> order;  // active labels, reference last
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (a.active[k]) order.push_back(k);

  const Eigen::MatrixXd design = detail::with_intercept(m.x);
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(design.rows(), static_cast<Eigen::Index>(order.size()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto pos = std::find(order.begin(), order.end(), label_index(m.labels[i])) - order.begin();
    targets(static_cast<Eigen::Index>(i), pos) = 1.0;
  }
  const auto fit = fit_softmax_newton(design, targets, cfg.lambda, cfg.irls_max_iterations,
                                      cfg.irls_tolerance);

  LinearParams params;
  params.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumClasses), design.cols());
  for (std::size_t r = 0; r + 1 < order.size(); ++r)
    params.coefficients.row(static_cast<Eigen::Index>(order[r])) = fit.beta.row(static_cast<Eigen::Index>(r));
  a.params = std::move(params);
  a.meta.iterations = fit.iterations;
  a.meta.objective = fit.objective;
  a.meta.lambda_used = fit.lambda_used;
  detail::record_flags(a.meta, fit);
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

/// One-vs-rest ridge logistic regression, one IRLS fit per label present in
/// training; scores are renormalized to the simplex at prediction time.
inline ModelArtifact fit_logreg(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  detail::check_rows(m);
  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::Logreg, cfg, m);
  a.active = detail::active_labels(m.labels);
  if (std::count(a.active.begin(), a.active.end(), true) < 2)
    throw Error(Errc::DegenerateLabels, "one-vs-rest needs at least two distinct labels");

  const Eigen::MatrixXd design = detail::with_intercept(m.x);
  LinearParams params;
  params.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumClasses), design.cols());
  a.meta.lambda_used = cfg.lambda;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!a.active[k]) continue;
    Eigen::MatrixXd targets(design.rows(), 2);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double y = label_index(m.labels[i]) == k ? 1.0 : 0.0;
      targets(static_cast<Eigen::Index>(i), 0) = y;
      targets(static_cast<Eigen::Index>(i), 1) = 1.0 - y;
    }
    const auto fit = fit_softmax_newton(design, targets, cfg.lambda, cfg.irls_max_iterations,
                                        cfg.irls_tolerance);
    params.coefficients.row(static_cast<Eigen::Index>(k)) = fit.beta.row(0);
    a.meta.iterations = std::max(a.meta.iterations, fit.iterations);
    a.meta.objective += fit.objective;
    a.meta.lambda_used = std::max(a.meta.lambda_used, fit.lambda_used);
    detail::record_flags(a.meta, fit);
  }
  a.params = std::move(params);
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

/// Ridge least squares via the normal equations; the intercept is not
/// penalized. Raises the penalty and flags SingularSystem when the system
/// cannot be solved as posed.
inline ModelArtifact fit_length_glm(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  if (m.rows() == 0) throw Error(Errc::EmptyCohort, "no training rows");
  if (m.lengths.size() != m.rows())
    throw Error(Errc::LengthMismatch, "length vector differs from row count");
  for (double l : m.lengths)
    if (!(l >= 0.0)) throw Error(Errc::RangeViolation, "treatment lengths must be >= 0");

  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::LengthGlm, cfg, m);
  a.active.fill(false);
  const Eigen::MatrixXd design = detail::with_intercept(m.x);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(m.lengths.data(), design.rows());
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * y;

  double lambda = cfg.lambda;
  Eigen::VectorXd beta;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd h = gram;
    for (Eigen::Index j = 1; j < h.rows(); ++j) h(j, j) += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double dmax = diag.cwiseAbs().maxCoeff();
    if (ldlt.info() == Eigen::Success && diag.minCoeff() > 1e-12 * std::max(dmax, 1e-300)) {
      beta = ldlt.solve(rhs);
      break;
    }
    if (attempt > 40) throw Error(Errc::SingularSystem, "normal equations stayed singular");
    if (!a.meta.has_flag("SingularSystem")) a.meta.flags.push_back("SingularSystem");
    lambda = std::max(10.0 * lambda, 1e-10 * std::max(1e-300, gram.diagonal().maxCoeff()));
  }
  a.params = LengthParams{beta};
  a.meta.iterations = 1;
  a.meta.objective = (y - design * beta).squaredNorm();
  a.meta.lambda_used = lambda;
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

}  // namespace drugsurv
