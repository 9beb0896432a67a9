#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hfdiff/likelihood.hpp"
#include "hfdiff/optimize.hpp"

namespace hfdiff {

enum class FitMode { Joint, TwoStep, ThreeStep };

const char* to_string(FitMode m);
FitMode fit_mode_from_string(const std::string& s);

// Plug-in estimates of the asymptotic covariance of
// (sqrt(n)(h/(tau h0) - 1), sqrt(n)(alpha - alpha0), sqrt(n h)(beta - beta0)).
struct CovarianceEstimates {
  Vector K;       // p_alpha
  Matrix Gamma1;  // p_alpha x p_alpha
  Matrix Gamma2;  // p_beta x p_beta
  Matrix Sigma;   // (1 + p) x (1 + p), ordered (h, alpha, beta)

  // 2/d + K' Gamma1^{-1} K, the asymptotic variance of sqrt(n)(h/(tau h0) - 1).
  double h_variance() const { return Sigma(0, 0); }
};

struct FitResult {
  FitMode mode = FitMode::Joint;
  std::string model_label;
  std::vector<std::string> param_names;
  int n = 0;
  int d = 1;
  int p_alpha = 0;
  int p_beta = 0;
  Vector theta;
  double h_tilde = 0.0;
  double loglik = 0.0;  // mgqlf at theta
  double h1 = 0.0;      // h1 at alpha
  double h2 = 0.0;      // h2 at (alpha, beta)
  std::optional<CovarianceEstimates> cov;
  Vector stderr_theta;  // NaN where cov is unavailable
  double stderr_h = 0.0;
  bool converged = false;
  bool at_boundary = false;
  int optimizer_runs = 0;      // multistart optimizations performed
  int evaluations = 0;
  std::vector<double> trace;   // best value of every start, in start order
  std::vector<std::string> warnings;

  Vector alpha() const { return theta.head(p_alpha); }
  Vector beta() const { return theta.tail(p_beta); }
};

// theta = argmax of mgqlf over the box (multistart). With a linear drift and
// profiling on, the search runs over alpha only and beta is maximized
// exactly for each alpha.
FitResult fit_joint(const PrecomputedPath& lik, const OptimizerConfig& cfg, bool profile_linear_drift = true);
// alpha' = argmax h1, beta' = argmax h2(alpha', .) (closed form for linear drift).
FitResult fit_two_step(const PrecomputedPath& lik, const OptimizerConfig& cfg);

// First stage of the two-step estimator on its own.
struct AlphaStage {
  Vector alpha;
  double h1 = 0.0;
  bool converged = true;
  int optimizer_runs = 0;
  int evaluations = 0;
  std::vector<double> trace;
};
AlphaStage fit_alpha_stage(const PrecomputedPath& lik, const OptimizerConfig& cfg);
// Second stage given a first-stage alpha (possibly from a model sharing the
// same diffusion but a different drift).
FitResult fit_two_step_given_alpha(const PrecomputedPath& lik, const AlphaStage& stage, const OptimizerConfig& cfg);
// Two-step, then alpha'' = argmax mgqlf(., beta').
FitResult fit_three_step(const PrecomputedPath& lik, const OptimizerConfig& cfg);
FitResult fit(const PrecomputedPath& lik, FitMode mode, const OptimizerConfig& cfg);

// Exact maximizer of beta -> h2(alpha, beta) for a linear drift, restricted
// to the beta box. Throws SingularNormalEquations if M is singular.
Vector linear_drift_beta(const PrecomputedPath& lik, const Vector& alpha, bool* clipped = nullptr);

// Throws SingularGamma when Gamma1 or Gamma2 is not invertible.
CovarianceEstimates cov_estimates(const PrecomputedPath& lik, const Vector& theta);

struct ConfidenceInterval {
  double lower;
  double upper;
};

// 100(1 - gamma)% interval for h: h +- z_{gamma/2} (h / sqrt n) sqrt(2/d + K'Gamma1^{-1}K).
ConfidenceInterval ci_for_h(const FitResult& fit, double gamma);

struct ScalarEstimate {
  double value;
  double stderr;
};

// kappa = -log h / log n, assuming tau h0 = n^(-kappa).
ScalarEstimate kappa_estimate(const FitResult& fit, int n);
// tau = h / h0 for a known h0.
ScalarEstimate tau_estimate(const FitResult& fit, double h0_known);

// Multiplies every observation by c > 0.
ObservationPath rescale_observations(const ObservationPath& path, double c);
// c^2/(nd) sum S(c X_{j-1}, alpha)^{-1}[(dX_j)^{(x)2}] on the original
// increments; equals h(alpha) computed on the rescaled path.
double rescaled_stepsize(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha, double c);

// a_{j-1}(alpha)^{-1} (dX_j - h b_{j-1}(theta)) / sqrt(h), one row per increment.
Matrix residuals(const PrecomputedPath& lik, const FitResult& fit);
Matrix residuals(const PrecomputedPath& lik, const Vector& theta, double h);

struct StandardizedEstimates {
  Vector u_alpha;
  Vector u_beta;
};

// u_alpha = (-(1/n) d2_alpha mgqlf)^{1/2} sqrt(n) (alpha - alpha0), likewise
// beta with n h. Symmetric eigen square root; NonPDHessian if a block is not
// negative definite.
StandardizedEstimates standardized_estimates(const PrecomputedPath& lik, const FitResult& fit, const Vector& theta0);

// Symmetric positive semidefinite square root.
Matrix symmetric_sqrt(const Matrix& A);

}  // namespace hfdiff
