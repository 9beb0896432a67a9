#include "hfdiff/likelihood.hpp"

#include <cmath>
#include <numbers>

#include "hfdiff/error.hpp"

namespace hfdiff {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, what);
}

}  // namespace

PrecomputedPath::PrecomputedPath(const ObservationPath& path, const DiffusionModel& model) : model_(model) {
  model_.validate();
  path.validate();
  if (path.dim() != model_.dim) throw Error(ErrorCode::InvalidArgument, "path dimension does not match model");
  n_ = path.n();
  d_ = path.dim();
  dx_ = path.increments();
  x_ = path.values.topRows(n_);

  if (model_.log_linear && d_ == 1) {
    const int p = model_.space.dim_alpha();
    basis_.resize(n_, p);
    for (int j = 0; j < n_; ++j) {
      const Vector f = model_.log_linear->basis(x_(j, 0));
      if (f.size() != p) throw Error(ErrorCode::InvalidArgument, "log-linear basis has wrong length");
      basis_.row(j) = f.transpose();
    }
  }
  if (model_.linear_drift && d_ == 1) {
    const int p = model_.space.dim_beta();
    design_.resize(n_, p);
    for (int j = 0; j < n_; ++j) {
      const Matrix g = model_.linear_drift->design(x_.row(j).transpose());
      if (g.rows() != 1 || g.cols() != p) throw Error(ErrorCode::InvalidArgument, "linear drift design has wrong shape");
      design_.row(j) = g.row(0);
    }
  }
}

const PrecomputedPath::AlphaCache& PrecomputedPath::alpha_terms(const Vector& alpha) const {
  if (cache_ && cache_->alpha.size() == alpha.size() && cache_->alpha == alpha) return *cache_;
  if (alpha.size() != model_.space.dim_alpha()) throw Error(ErrorCode::InvalidArgument, "alpha has wrong dimension");

  AlphaCache c;
  c.alpha = alpha;
  if (d_ == 1) {
    Vector logS(n_);
    if (basis_.cols() == alpha.size() && model_.log_linear) {
      logS = basis_ * alpha;
    } else {
      for (int j = 0; j < n_; ++j) {
        const double S = eval_S(model_, x_.row(j).transpose(), alpha)(0, 0);
        if (!(S > 0.0) || !std::isfinite(S))
          throw Error(ErrorCode::SingularDiffusion, "diffusion matrix is not positive definite", static_cast<std::size_t>(j));
        logS[j] = std::log(S);
      }
    }
    c.sinv_scalar = (-logS.array()).exp().matrix();
    for (int j = 0; j < n_; ++j)
      if (!(c.sinv_scalar[j] > 0.0) || !std::isfinite(c.sinv_scalar[j]))
        throw Error(ErrorCode::SingularDiffusion, "diffusion matrix is not invertible", static_cast<std::size_t>(j));
    c.sum_logdet = logS.sum();
    c.sum_quad = (c.sinv_scalar.array() * dx_.col(0).array().square()).sum();
  } else {
    c.sinv.reserve(static_cast<std::size_t>(n_));
    const Matrix I = Matrix::Identity(d_, d_);
    for (int j = 0; j < n_; ++j) {
      const Matrix S = eval_S(model_, x_.row(j).transpose(), alpha);
      Eigen::LLT<Matrix> llt(S);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularDiffusion, "diffusion matrix is not positive definite", static_cast<std::size_t>(j));
      const Matrix L = llt.matrixL();
      c.sum_logdet += 2.0 * L.diagonal().array().log().sum();
      Matrix Sinv = llt.solve(I);
      Sinv = 0.5 * (Sinv + Sinv.transpose());
      const Vector dx = dx_.row(j).transpose();
      c.sum_quad += dx.dot(Sinv * dx);
      c.sinv.push_back(std::move(Sinv));
    }
  }
  require_finite(c.sum_logdet, "log-determinant sum is not finite");
  require_finite(c.sum_quad, "quadratic form sum is not finite");
  cache_ = std::move(c);
  return *cache_;
}

Matrix PrecomputedPath::drift_rows(const Vector& alpha, const Vector& beta) const {
  if (beta.size() != model_.space.dim_beta()) throw Error(ErrorCode::InvalidArgument, "beta has wrong dimension");
  if (design_.size() > 0 || (model_.linear_drift && d_ == 1)) {
    if (beta.size() == 0) return Matrix::Zero(n_, 1);
    return design_ * beta;
  }
  Matrix B(n_, d_);
  for (int j = 0; j < n_; ++j) B.row(j) = eval_b(model_, x_.row(j).transpose(), alpha, beta).transpose();
  return B;
}

std::pair<double, double> PrecomputedPath::drift_sums(const AlphaCache& c, const Matrix& B) const {
  if (d_ == 1) {
    const auto w = c.sinv_scalar.array();
    const auto b = B.col(0).array();
    return {(w * dx_.col(0).array() * b).sum(), (w * b.square()).sum()};
  }
  double cross = 0.0;
  double quad = 0.0;
  for (int j = 0; j < n_; ++j) {
    const Vector b = B.row(j).transpose();
    const Vector Sb = c.sinv[static_cast<std::size_t>(j)] * b;
    cross += dx_.row(j).dot(Sb);
    quad += b.dot(Sb);
  }
  return {cross, quad};
}

double PrecomputedPath::mgqlf_constant() const { return -0.5 * n_ * d_ * (1.0 + kLog2Pi); }

double PrecomputedPath::h_of_alpha(const Vector& alpha) const {
  const auto& c = alpha_terms(alpha);
  const double h = c.sum_quad / (static_cast<double>(n_) * d_);
  if (!(h > 0.0)) throw Error(ErrorCode::DegenerateData, "all increments are zero");
  return h;
}

double PrecomputedPath::gqlf(const Vector& theta, double h) const {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "stepsize must be positive");
  const Vector alpha = model_.space.alpha_of(theta);
  const auto& c = alpha_terms(alpha);
  const auto [cross, quad] = drift_sums(c, drift_rows(alpha, model_.space.beta_of(theta)));
  const double v = -0.5 * (n_ * d_ * (kLog2Pi + std::log(h)) + c.sum_logdet + c.sum_quad / h - 2.0 * cross + h * quad);
  require_finite(v, "quasi-likelihood is not finite");
  return v;
}

double PrecomputedPath::h_star(const Vector& theta) const {
  const Vector alpha = model_.space.alpha_of(theta);
  const double h = h_of_alpha(alpha);
  const auto& c = alpha_terms(alpha);
  const double B = drift_sums(c, drift_rows(alpha, model_.space.beta_of(theta))).second / n_;
  if (B == 0.0) return h;
  const double A = c.sum_quad / n_;
  // (-d + sqrt(d^2 + 4AB)) / (2B), rationalized to avoid cancellation.
  return 2.0 * A / (d_ + std::sqrt(static_cast<double>(d_) * d_ + 4.0 * A * B));
}

double PrecomputedPath::h1(const Vector& alpha) const {
  const double h = h_of_alpha(alpha);
  const auto& c = alpha_terms(alpha);
  return -0.5 * (c.sum_logdet + n_ * d_ * std::log(h));
}

double PrecomputedPath::h2(const Vector& alpha, const Vector& beta) const {
  const double h = h_of_alpha(alpha);
  const auto& c = alpha_terms(alpha);
  const auto [cross, quad] = drift_sums(c, drift_rows(alpha, beta));
  return cross - 0.5 * h * quad;
}

double PrecomputedPath::mgqlf(const Vector& theta) const {
  const Vector alpha = model_.space.alpha_of(theta);
  const Vector beta = model_.space.beta_of(theta);
  const double h = h_of_alpha(alpha);
  const auto& c = alpha_terms(alpha);
  const auto [cross, quad] = drift_sums(c, drift_rows(alpha, beta));
  const double v = mgqlf_constant() - 0.5 * (c.sum_logdet + n_ * d_ * std::log(h)) + cross - 0.5 * h * quad;
  require_finite(v, "modified quasi-likelihood is not finite");
  return v;
}

double PrecomputedPath::value(Objective which, const Vector& theta) const {
  switch (which) {
    case Objective::H1: return h1(model_.space.alpha_of(theta));
    case Objective::H2: return h2(model_.space.alpha_of(theta), model_.space.beta_of(theta));
    case Objective::MGQLF: return mgqlf(theta);
  }
  return 0.0;
}

PrecomputedPath::DriftQuadratic PrecomputedPath::drift_quadratic(const Vector& alpha) const {
  if (!model_.linear_drift) throw Error(ErrorCode::InvalidArgument, "drift is not declared linear in beta");
  const int p = model_.space.dim_beta();
  DriftQuadratic q;
  q.h = h_of_alpha(alpha);
  const auto& c = alpha_terms(alpha);
  if (d_ == 1) {
    const Vector w = c.sinv_scalar;
    q.u = design_.transpose() * (w.array() * dx_.col(0).array()).matrix();
    q.M = design_.transpose() * w.asDiagonal() * design_;
  } else {
    q.u = Vector::Zero(p);
    q.M = Matrix::Zero(p, p);
    for (int j = 0; j < n_; ++j) {
      const Matrix G = model_.linear_drift->design(x_.row(j).transpose());
      const Matrix& W = c.sinv[static_cast<std::size_t>(j)];
      q.u += G.transpose() * (W * dx_.row(j).transpose());
      q.M += G.transpose() * W * G;
    }
  }
  q.M = 0.5 * (q.M + q.M.transpose());
  return q;
}

std::vector<Matrix> PrecomputedPath::inverse_diffusion(const Vector& alpha) const {
  const auto& c = alpha_terms(alpha);
  if (d_ > 1) return c.sinv;
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) out.push_back(Matrix::Constant(1, 1, c.sinv_scalar[j]));
  return out;
}

bool PrecomputedPath::has_analytic_gradient() const {
  return model_.dS_dalpha.has_value() && (model_.db_dbeta.has_value() || model_.linear_drift.has_value()) &&
         (model_.db_dalpha.has_value() || model_.linear_drift.has_value());
}

Vector PrecomputedPath::analytic_gradient(Objective which, const Vector& theta) const {
  if (!has_analytic_gradient()) throw Error(ErrorCode::InvalidArgument, "model lacks analytic derivative providers");
  const int pa = model_.space.dim_alpha();
  const int pb = model_.space.dim_beta();
  const Vector alpha = model_.space.alpha_of(theta);
  const Vector beta = model_.space.beta_of(theta);
  const double nd = static_cast<double>(n_) * d_;
  const double h = h_of_alpha(alpha);
  const std::vector<Matrix> Sinv = inverse_diffusion(alpha);
  const Matrix B = drift_rows(alpha, beta);

  Vector dlogdet = Vector::Zero(pa);
  Vector dQ = Vector::Zero(pa);
  Vector dL = Vector::Zero(pa);
  Vector dR = Vector::Zero(pa);
  Vector gb = Vector::Zero(pb);
  double R = 0.0;
  for (int j = 0; j < n_; ++j) {
    const Vector x = x_.row(j).transpose();
    const Vector dx = dx_.row(j).transpose();
    const Vector b = B.row(j).transpose().head(d_);
    const Matrix& W = Sinv[static_cast<std::size_t>(j)];
    const std::vector<Matrix> dS = (*model_.dS_dalpha)(x, alpha);
    const Matrix db_a = drift_alpha_derivative(model_, x, alpha, beta);
    const Matrix db_b = drift_beta_derivative(model_, x, alpha, beta);
    const Vector Wdx = W * dx;
    const Vector Wb = W * b;
    R += b.dot(Wb);
    for (int k = 0; k < pa; ++k) {
      const Matrix WdSW = W * dS[static_cast<std::size_t>(k)] * W;
      dlogdet[k] += (W * dS[static_cast<std::size_t>(k)]).trace();
      dQ[k] -= dx.dot(WdSW * dx);
      dL[k] += -dx.dot(WdSW * b) + Wdx.dot(db_a.col(k));
      dR[k] += -b.dot(WdSW * b) + 2.0 * Wb.dot(db_a.col(k));
    }
    for (int l = 0; l < pb; ++l) gb[l] += Wdx.dot(db_b.col(l)) - h * Wb.dot(db_b.col(l));
  }
  const Vector dh = dQ / nd;
  const Vector g_h1 = -0.5 * (dlogdet + nd * dh / h);
  const Vector g_h2_alpha = dL - 0.5 * (dh * R + h * dR);

  if (which == Objective::H1) return g_h1;
  Vector g(pa + pb);
  if (which == Objective::H2) {
    g << g_h2_alpha, gb;
  } else {
    g << g_h1 + g_h2_alpha, gb;
  }
  return g;
}

namespace {

std::optional<StencilBox> box_of(const ParamSpace& space) { return StencilBox{space.lower(), space.upper()}; }

}  // namespace

Matrix hessian_alpha(const PrecomputedPath& lik, Objective which, const Vector& theta) {
  const auto& space = lik.model().space;
  const Vector beta = space.beta_of(theta);
  const int pa = space.dim_alpha();
  if (pa == 0) return Matrix(0, 0);
  const StencilBox box{space.lower().head(pa), space.upper().head(pa)};
  return numeric_hessian([&](const Vector& al) { return lik.value(which, space.join(al, beta)); },
                         space.alpha_of(theta), box);
}

Matrix hessian_beta(const PrecomputedPath& lik, Objective which, const Vector& theta) {
  const auto& space = lik.model().space;
  const int pb = space.dim_beta();
  if (pb == 0 || which == Objective::H1) return Matrix(0, 0);
  const Vector alpha = space.alpha_of(theta);
  if (lik.has_linear_drift()) {
    const auto q = lik.drift_quadratic(alpha);
    return -q.h * q.M;
  }
  const StencilBox box{space.lower().tail(pb), space.upper().tail(pb)};
  return numeric_hessian([&](const Vector& be) { return lik.value(which, space.join(alpha, be)); },
                         space.beta_of(theta), box);
}

Matrix grad_hessian(const PrecomputedPath& lik, const Vector& theta, Objective which, int order) {
  const auto& space = lik.model().space;
  if (theta.size() != space.dim()) throw Error(ErrorCode::InvalidArgument, "theta has wrong dimension");
  const int pa = space.dim_alpha();
  if (order == 1) {
    if (lik.has_analytic_gradient()) return lik.analytic_gradient(which, theta);
    if (which == Objective::H1) {
      const StencilBox box{space.lower().head(pa), space.upper().head(pa)};
      return numeric_gradient([&](const Vector& al) { return lik.h1(al); }, space.alpha_of(theta), box);
    }
    return numeric_gradient([&](const Vector& th) { return lik.value(which, th); }, theta, box_of(space));
  }
  if (order != 2) throw Error(ErrorCode::InvalidArgument, "derivative order must be 1 or 2");
  if (which == Objective::H1) return hessian_alpha(lik, which, theta);
  Matrix H = numeric_hessian([&](const Vector& th) { return lik.value(which, th); }, theta, box_of(space));
  const int pb = space.dim_beta();
  if (pb > 0 && lik.has_linear_drift()) H.bottomRightCorner(pb, pb) = hessian_beta(lik, which, theta);
  return H;
}

double gqlf(const ObservationPath& path, const DiffusionModel& model, const Vector& theta, double h) {
  return PrecomputedPath(path, model).gqlf(theta, h);
}
double h_of_alpha(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha) {
  return PrecomputedPath(path, model).h_of_alpha(alpha);
}
double h_star(const ObservationPath& path, const DiffusionModel& model, const Vector& theta) {
  return PrecomputedPath(path, model).h_star(theta);
}
double mgqlf(const ObservationPath& path, const DiffusionModel& model, const Vector& theta) {
  return PrecomputedPath(path, model).mgqlf(theta);
}
double h1(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha) {
  return PrecomputedPath(path, model).h1(alpha);
}
double h2(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha, const Vector& beta) {
  return PrecomputedPath(path, model).h2(alpha, beta);
}

}  // namespace hfdiff
