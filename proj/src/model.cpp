#include "hfdiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hfdiff/error.hpp"

namespace hfdiff {

ParamSpace::ParamSpace(std::vector<Interval> alpha_bounds, std::vector<Interval> beta_bounds,
                       std::vector<std::string> alpha_names, std::vector<std::string> beta_names)
    : alpha_bounds_(std::move(alpha_bounds)),
      beta_bounds_(std::move(beta_bounds)),
      alpha_names_(std::move(alpha_names)),
      beta_names_(std::move(beta_names)) {
  if (alpha_bounds_.empty() && beta_bounds_.empty())
    throw Error(ErrorCode::InvalidArgument, "parameter space must have at least one coordinate");
  for (const auto& iv : bounds()) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi))
      throw Error(ErrorCode::InvalidArgument, "parameter bounds must be finite and nonempty");
  }
  if (alpha_names_.empty())
    for (int k = 0; k < dim_alpha(); ++k) alpha_names_.push_back("alpha" + std::to_string(k + 1));
  if (beta_names_.empty())
    for (int k = 0; k < dim_beta(); ++k) beta_names_.push_back("beta" + std::to_string(k + 1));
  if (static_cast<int>(alpha_names_.size()) != dim_alpha() || static_cast<int>(beta_names_.size()) != dim_beta())
    throw Error(ErrorCode::InvalidArgument, "parameter names do not match bounds");
}

std::vector<Interval> ParamSpace::bounds() const {
  std::vector<Interval> all = alpha_bounds_;
  all.insert(all.end(), beta_bounds_.begin(), beta_bounds_.end());
  return all;
}

Vector ParamSpace::lower() const {
  const auto all = bounds();
  Vector v(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) v[static_cast<Eigen::Index>(i)] = all[i].lo;
  return v;
}

Vector ParamSpace::upper() const {
  const auto all = bounds();
  Vector v(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) v[static_cast<Eigen::Index>(i)] = all[i].hi;
  return v;
}

bool ParamSpace::contains(const Vector& theta) const {
  if (theta.size() != dim()) return false;
  return (theta.array() >= lower().array()).all() && (theta.array() <= upper().array()).all();
}

Vector ParamSpace::project(const Vector& theta) const {
  return theta.cwiseMax(lower()).cwiseMin(upper());
}

bool ParamSpace::on_boundary(const Vector& theta, double tol) const {
  const Vector lo = lower();
  const Vector hi = upper();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double width = hi[i] - lo[i];
    if (theta[i] - lo[i] <= tol * width || hi[i] - theta[i] <= tol * width) return true;
  }
  return false;
}

Vector ParamSpace::join(const Vector& alpha, const Vector& beta) const {
  Vector theta(alpha.size() + beta.size());
  theta << alpha, beta;
  return theta;
}

void DiffusionModel::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "state dimension must be positive");
  if (!a || !b) throw Error(ErrorCode::InvalidArgument, "model '" + label + "' lacks a coefficient function");
  if (log_linear && dim != 1)
    throw Error(ErrorCode::InvalidArgument, "log-linear diffusion descriptor requires d = 1");
}

DiffusionModel DiffusionModel::generic() const {
  DiffusionModel copy;
  copy.label = label;
  copy.dim = dim;
  copy.space = space;
  copy.a = a;
  copy.b = b;
  return copy;
}

Matrix eval_S(const DiffusionModel& model, const Vector& x, const Vector& alpha) {
  const Matrix a = model.a(x, alpha);
  if (!a.allFinite()) throw Error(ErrorCode::NonFiniteCoefficient, "diffusion coefficient is not finite");
  if (a.rows() != model.dim || a.cols() != model.dim)
    throw Error(ErrorCode::InvalidArgument, "diffusion coefficient has wrong shape");
  const Matrix S = a * a.transpose();
  return 0.5 * (S + S.transpose());
}

Vector eval_b(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta) {
  Vector b = model.b(x, alpha, beta);
  if (!b.allFinite()) throw Error(ErrorCode::NonFiniteCoefficient, "drift coefficient is not finite");
  if (b.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "drift coefficient has wrong size");
  return b;
}

std::vector<Matrix> diffusion_alpha_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha) {
  if (model.dS_dalpha) return (*model.dS_dalpha)(x, alpha);
  const int d = model.dim;
  const Matrix J = numeric_jacobian(
      [&](const Vector& al) {
        const Matrix S = eval_S(model, x, al);
        return Vector(Eigen::Map<const Vector>(S.data(), S.size()));
      },
      alpha);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(alpha.size()));
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    Matrix dS = Eigen::Map<const Matrix>(J.col(k).data(), d, d);
    out.push_back(0.5 * (dS + dS.transpose()));
  }
  return out;
}

Matrix drift_beta_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta) {
  if (model.db_dbeta) return (*model.db_dbeta)(x, alpha, beta);
  if (model.linear_drift) return model.linear_drift->design(x);
  if (beta.size() == 0) return Matrix(model.dim, 0);
  return numeric_jacobian([&](const Vector& be) { return eval_b(model, x, alpha, be); }, beta);
}

Matrix drift_alpha_derivative(const DiffusionModel& model, const Vector& x, const Vector& alpha, const Vector& beta) {
  if (model.db_dalpha) return (*model.db_dalpha)(x, alpha, beta);
  if (model.linear_drift || alpha.size() == 0) return Matrix::Zero(model.dim, alpha.size());
  return numeric_jacobian([&](const Vector& al) { return eval_b(model, x, al, beta); }, alpha);
}

double gershgorin_lower_bound(const Matrix& S) {
  double bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j)
      if (j != i) off += std::abs(S(i, j));
    bound = std::min(bound, S(i, i) - off);
  }
  return bound;
}

double gershgorin_lower_bound(const DiffusionModel& model, std::span<const Vector> samples, const Vector& alpha) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no sample points");
  double bound = std::numeric_limits<double>::infinity();
  for (const auto& x : samples) bound = std::min(bound, gershgorin_lower_bound(eval_S(model, x, alpha)));
  return bound;
}

}  // namespace hfdiff
