#pragma once

#include <optional>
#include <vector>

#include "hfdiff/model.hpp"
#include "hfdiff/simulate.hpp"

namespace hfdiff {

enum class Objective { H1, H2, MGQLF };

// Increments and lagged states of one path bound to one model, with the
// per-alpha inverse diffusion matrices memoized for the last alpha seen.
// Evaluation is logically const but mutates the memo: use one instance per
// thread.
class PrecomputedPath {
 public:
  PrecomputedPath(const ObservationPath& path, const DiffusionModel& model);

  int n() const { return n_; }
  int dim() const { return d_; }
  const DiffusionModel& model() const { return model_; }
  const Matrix& increments() const { return dx_; }
  // Row j is X_{t_j}, j = 0..n-1 (the left end of each increment).
  const Matrix& lagged_states() const { return x_; }

  // Gaussian quasi-log-likelihood H_n(theta; h).
  double gqlf(const Vector& theta, double h) const;
  // h(alpha) = (1/nd) sum S^{-1}[(dX)^{(x)2}].
  double h_of_alpha(const Vector& alpha) const;
  // Positive root of d/dh H_n(theta; h) = 0; h(alpha) when the drift term vanishes.
  double h_star(const Vector& theta) const;
  // H_n(theta; h(alpha)) in its expanded closed form.
  double mgqlf(const Vector& theta) const;
  double h1(const Vector& alpha) const;
  double h2(const Vector& alpha, const Vector& beta) const;
  double value(Objective which, const Vector& theta) const;

  // -(nd/2)(1 + log 2 pi): the constant in mgqlf = const + h1 + h2.
  double mgqlf_constant() const;

  // For drift linear in beta: h2(alpha, beta) = beta.u - (h/2) beta' M beta.
  struct DriftQuadratic {
    Vector u;
    Matrix M;
    double h = 0.0;
  };
  bool has_linear_drift() const { return model_.linear_drift.has_value(); }
  DriftQuadratic drift_quadratic(const Vector& alpha) const;

  // True when dS/dalpha and drift derivative providers are all available.
  bool has_analytic_gradient() const;
  // Gradient of `which` w.r.t. alpha (H1) or theta (H2, MGQLF) from the
  // derivative providers.
  Vector analytic_gradient(Objective which, const Vector& theta) const;

  // Per-observation inverse diffusion at alpha, d = 1 stored as 1x1.
  std::vector<Matrix> inverse_diffusion(const Vector& alpha) const;
  // Drift b_{j-1}(theta) as rows.
  Matrix drift_rows(const Vector& alpha, const Vector& beta) const;

 private:
  struct AlphaCache {
    Vector alpha;
    double sum_logdet = 0.0;
    double sum_quad = 0.0;
    Vector sinv_scalar;          // d == 1
    std::vector<Matrix> sinv;    // d > 1
  };
  const AlphaCache& alpha_terms(const Vector& alpha) const;
  // sum_j dX' S^{-1} b and sum_j b' S^{-1} b.
  std::pair<double, double> drift_sums(const AlphaCache& c, const Matrix& b) const;

  DiffusionModel model_;
  int n_ = 0;
  int d_ = 1;
  Matrix dx_;
  Matrix x_;
  Matrix basis_;   // n x p_alpha, log-linear fast path
  Matrix design_;  // n x p_beta, linear drift with d == 1
  mutable std::optional<AlphaCache> cache_;
};

// Free-function forms; each builds a PrecomputedPath.
double gqlf(const ObservationPath& path, const DiffusionModel& model, const Vector& theta, double h);
double h_of_alpha(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha);
double h_star(const ObservationPath& path, const DiffusionModel& model, const Vector& theta);
double mgqlf(const ObservationPath& path, const DiffusionModel& model, const Vector& theta);
double h1(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha);
double h2(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha, const Vector& beta);

// Derivatives of `which` at theta. order 1 returns a column vector, order 2
// a symmetric matrix. Coordinates are alpha for H1 and theta otherwise.
// Gradients use the analytic providers when present; Hessians are central
// differences (stencils kept inside the parameter box) except the beta block
// of a linear drift, which is exact.
Matrix grad_hessian(const PrecomputedPath& lik, const Vector& theta, Objective which, int order);

// Hessian of alpha -> mgqlf(alpha, beta) and beta -> mgqlf(alpha, beta).
Matrix hessian_alpha(const PrecomputedPath& lik, Objective which, const Vector& theta);
Matrix hessian_beta(const PrecomputedPath& lik, Objective which, const Vector& theta);

}  // namespace hfdiff
