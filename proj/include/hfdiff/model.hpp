#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hfdiff/numeric.hpp"

namespace hfdiff {

struct Interval {
  double lo;
  double hi;
};

// Bounded box Theta_alpha x Theta_beta. theta is always laid out as
// (alpha, beta).
class ParamSpace {
 public:
  ParamSpace() = default;
  ParamSpace(std::vector<Interval> alpha_bounds, std::vector<Interval> beta_bounds,
             std::vector<std::string> alpha_names = {}, std::vector<std::string> beta_names = {});

  int dim_alpha() const { return static_cast<int>(alpha_bounds_.size()); }
  int dim_beta() const { return static_cast<int>(beta_bounds_.size()); }
  int dim() const { return dim_alpha() + dim_beta(); }

  const std::vector<Interval>& alpha_bounds() const { return alpha_bounds_; }
  const std::vector<Interval>& beta_bounds() const { return beta_bounds_; }
  std::vector<Interval> bounds() const;

  const std::vector<std::string>& alpha_names() const { return alpha_names_; }
  const std::vector<std::string>& beta_names() const { return beta_names_; }

  Vector lower() const;
  Vector upper() const;
  bool contains(const Vector& theta) const;
  Vector project(const Vector& theta) const;
  // True if some coordinate is within `tol` (relative to the box width) of a face.
  bool on_boundary(const Vector& theta, double tol = 1e-6) const;

  Vector alpha_of(const Vector& theta) const { return theta.head(dim_alpha()); }
  Vector beta_of(const Vector& theta) const { return theta.tail(dim_beta()); }
  Vector join(const Vector& alpha, const Vector& beta) const;

 private:
  std::vector<Interval> alpha_bounds_;
  std::vector<Interval> beta_bounds_;
  std::vector<std::string> alpha_names_;
  std::vector<std::string> beta_names_;
};

using DiffusionFn = std::function<Matrix(const Vector& x, const Vector& alpha)>;
using DriftFn = std::function<Vector(const Vector& x, const Vector& alpha, const Vector& beta)>;
// Returns the p_alpha matrices d S / d alpha_k.
using DiffusionDerivFn = std::function<std::vector<Matrix>(const Vector& x, const Vector& alpha)>;
// Returns the d x p_beta (or d x p_alpha) Jacobian of b.
using DriftDerivFn = std::function<Matrix(const Vector& x, const Vector& alpha, const Vector& beta)>;

// Scalar (d = 1) diffusion of the form S(x, alpha) = exp(alpha . basis(x)).
// When present, likelihood code caches basis values per path.
struct LogLinearDiffusion {
  std::function<Vector(double x)> basis;
};

// b(x, theta) = design(x) * beta with a d x p_beta design not depending on alpha.
struct LinearDrift {
  std::function<Matrix(const Vector& x)> design;
};

// dX_t = sqrt(tau) a(X_t, alpha) dw_t + tau b(X_t, theta) dt.
// Immutable after construction; coefficient functions must be pure.
struct DiffusionModel {
  std::string label;
  int dim = 1;
  ParamSpace space;
  DiffusionFn a;
  DriftFn b;
  std::optional<DiffusionDerivFn> dS_dalpha;
  std::optional<DriftDerivFn> db_dalpha;
  std::optional<DriftDerivFn> db_dbeta;
  std::optional<LogLinearDiffusion> log_linear;
  std::optional<LinearDrift> linear_drift;

  // Throws InvalidArgument on inconsistent shapes.
  void validate() const;
  // Same coefficients with the optional fast paths and analytic derivative
  // providers stripped; used to cross-check them against the generic route.
  DiffusionModel generic() const;
};

// S = a a^T, symmetrized so the result is exactly symmetric.
Matrix eval_S(const DiffusionModel& model, const Vector& x, const Vector& alpha);

// Drift at a state, with non-finite output reported as NonFiniteCoefficient.
Vector eval_b(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta);

// d S / d alpha_k from the provider or by central differences.
std::vector<Matrix> diffusion_alpha_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha);

// d b / d beta (d x p_beta), analytic when a provider or linear design exists.
Matrix drift_beta_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta);

// d b / d alpha (d x p_alpha).
Matrix drift_alpha_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta);

// min over samples of min_i (S_ii - sum_{j != i} |S_ij|). A positive value
// bounds lambda_min{S} from below on the sample.
double gershgorin_lower_bound(const DiffusionModel& model, std::span<const Vector> samples, const Vector& alpha);

// Same bound for an explicit matrix.
double gershgorin_lower_bound(const Matrix& S);

}  // namespace hfdiff
