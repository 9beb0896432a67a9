#include "hfdiff/estimate.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "hfdiff/error.hpp"

namespace hfdiff {

const char* to_string(FitMode m) {
  switch (m) {
    case FitMode::Joint: return "joint";
    case FitMode::TwoStep: return "two-step";
    case FitMode::ThreeStep: return "three-step";
  }
  return "joint";
}

FitMode fit_mode_from_string(const std::string& s) {
  if (s == "joint") return FitMode::Joint;
  if (s == "two-step") return FitMode::TwoStep;
  if (s == "three-step") return FitMode::ThreeStep;
  throw Error(ErrorCode::ConfigError, "unknown estimator mode '" + s + "'");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Interval> start_intervals(const ParamSpace& space, const OptimizerConfig& cfg) {
  if (cfg.init_intervals.empty()) return space.bounds();
  if (static_cast<int>(cfg.init_intervals.size()) != space.dim())
    throw Error(ErrorCode::ConfigError, "start intervals do not match the parameter dimension");
  return cfg.init_intervals;
}

std::vector<Interval> slice(const std::vector<Interval>& v, int from, int count) {
  return {v.begin() + from, v.begin() + from + count};
}

std::vector<double> start_values(const MultistartResult& r) {
  std::vector<double> out;
  for (const auto& s : r.starts) out.push_back(s.value);
  return out;
}

// Inverse of a symmetric matrix, or nullopt if it is not positive definite.
std::optional<Matrix> spd_inverse(const Matrix& A) {
  if (A.rows() == 0) return Matrix(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) return std::nullopt;
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if (!(es.eigenvalues().minCoeff() > 1e-12 * top)) return std::nullopt;
  Matrix inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return Matrix(0.5 * (inv + inv.transpose()));
}

// max_b b'u - 0.5 b'Ab over the box [lo, hi], A positive definite.
Vector box_qp(const Matrix& A, const Vector& u, const Vector& lo, const Vector& hi, bool* clipped) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
    throw Error(ErrorCode::SingularNormalEquations, "linear drift normal equations are singular");
  Vector b = llt.solve(u);
  const bool inside = (b.array() >= lo.array()).all() && (b.array() <= hi.array()).all();
  if (clipped) *clipped = !inside;
  if (inside) return b;
  // Projected coordinate ascent; exact for a strictly concave quadratic.
  b = b.cwiseMax(lo).cwiseMin(hi);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double rest = A.row(i).dot(b) - A(i, i) * b[i];
      const double bi = std::clamp((u[i] - rest) / A(i, i), lo[i], hi[i]);
      change = std::max(change, std::abs(bi - b[i]));
      b[i] = bi;
    }
    if (change <= 1e-15 * std::max(1.0, b.cwiseAbs().maxCoeff())) break;
  }
  return b;
}

void finalize(const PrecomputedPath& lik, FitResult& fit) {
  const auto& space = lik.model().space;
  fit.model_label = lik.model().label;
  fit.param_names = space.alpha_names();
  fit.param_names.insert(fit.param_names.end(), space.beta_names().begin(), space.beta_names().end());
  fit.n = lik.n();
  fit.d = lik.dim();
  fit.p_alpha = space.dim_alpha();
  fit.p_beta = space.dim_beta();
  const Vector alpha = fit.alpha();
  fit.h_tilde = lik.h_of_alpha(alpha);
  fit.loglik = lik.mgqlf(fit.theta);
  fit.h1 = lik.h1(alpha);
  fit.h2 = lik.h2(alpha, fit.beta());
  fit.at_boundary = space.on_boundary(fit.theta);
  if (fit.at_boundary) {
    fit.converged = false;
    fit.warnings.push_back("estimate lies on the parameter box boundary");
  }
  fit.stderr_theta = Vector::Constant(space.dim(), kNaN);
  fit.stderr_h = kNaN;
  try {
    fit.cov = cov_estimates(lik, fit.theta);
    const auto& S = fit.cov->Sigma;
    const double n = fit.n;
    for (int k = 0; k < fit.p_alpha; ++k) fit.stderr_theta[k] = std::sqrt(S(1 + k, 1 + k) / n);
    for (int k = 0; k < fit.p_beta; ++k)
      fit.stderr_theta[fit.p_alpha + k] = std::sqrt(S(1 + fit.p_alpha + k, 1 + fit.p_alpha + k) / (n * fit.h_tilde));
    fit.stderr_h = fit.h_tilde * std::sqrt(S(0, 0) / n);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularGamma) throw;
    fit.warnings.push_back(e.what());
  }
}

// argmax over alpha of `objective`, or the empty vector when p_alpha = 0.
MultistartResult maximize_alpha(const PrecomputedPath& lik, const OptimizerConfig& cfg, const ScalarFn& objective,
                                const VectorFn& grad) {
  const auto& space = lik.model().space;
  const int pa = space.dim_alpha();
  const auto init = slice(start_intervals(space, cfg), 0, pa);
  return maximize(objective, space.lower().head(pa), space.upper().head(pa), init, cfg, grad);
}

}  // namespace

Vector linear_drift_beta(const PrecomputedPath& lik, const Vector& alpha, bool* clipped) {
  const auto& space = lik.model().space;
  const int pb = space.dim_beta();
  if (pb == 0) {
    if (clipped) *clipped = false;
    return Vector(0);
  }
  const auto q = lik.drift_quadratic(alpha);
  return box_qp(q.h * q.M, q.u, space.lower().tail(pb), space.upper().tail(pb), clipped);
}

FitResult fit_joint(const PrecomputedPath& lik, const OptimizerConfig& cfg, bool profile_linear_drift) {
  cfg.validate();
  const auto& space = lik.model().space;
  const int pb = space.dim_beta();
  FitResult fit;
  fit.mode = FitMode::Joint;

  if (pb == 0 || (profile_linear_drift && lik.has_linear_drift())) {
    auto profiled = [&](const Vector& alpha) {
      if (pb == 0) return lik.mgqlf_constant() + lik.h1(alpha);
      const Vector beta = linear_drift_beta(lik, alpha);
      const auto q = lik.drift_quadratic(alpha);
      return lik.mgqlf_constant() + lik.h1(alpha) + beta.dot(q.u) - 0.5 * q.h * beta.dot(q.M * beta);
    };
    VectorFn grad;
    if (pb == 0 && lik.has_analytic_gradient())
      grad = [&](const Vector& alpha) { return lik.analytic_gradient(Objective::H1, space.join(alpha, Vector(0))); };
    const auto res = maximize_alpha(lik, cfg, profiled, grad);
    fit.theta = space.join(res.x, pb == 0 ? Vector(0) : linear_drift_beta(lik, res.x));
    fit.converged = res.converged;
    fit.optimizer_runs = 1;
    fit.evaluations = res.evaluations;
    fit.trace = start_values(res);
  } else {
    VectorFn grad;
    if (lik.has_analytic_gradient())
      grad = [&](const Vector& th) { return lik.analytic_gradient(Objective::MGQLF, th); };
    const auto res = maximize([&](const Vector& th) { return lik.mgqlf(th); }, space.lower(), space.upper(),
                              start_intervals(space, cfg), cfg, grad);
    fit.theta = res.x;
    fit.converged = res.converged;
    fit.optimizer_runs = 1;
    fit.evaluations = res.evaluations;
    fit.trace = start_values(res);
  }
  finalize(lik, fit);
  return fit;
}

AlphaStage fit_alpha_stage(const PrecomputedPath& lik, const OptimizerConfig& cfg) {
  cfg.validate();
  const auto& space = lik.model().space;
  const int pb = space.dim_beta();
  AlphaStage stage;
  stage.alpha = Vector(0);
  if (space.dim_alpha() > 0) {
    VectorFn grad;
    if (lik.has_analytic_gradient())
      grad = [&](const Vector& al) { return lik.analytic_gradient(Objective::H1, space.join(al, Vector::Zero(pb))); };
    const auto res = maximize_alpha(lik, cfg, [&](const Vector& al) { return lik.h1(al); }, grad);
    stage.alpha = res.x;
    stage.converged = res.converged;
    stage.optimizer_runs = 1;
    stage.evaluations = res.evaluations;
    stage.trace = start_values(res);
  }
  stage.h1 = lik.h1(stage.alpha);
  return stage;
}

FitResult fit_two_step_given_alpha(const PrecomputedPath& lik, const AlphaStage& stage, const OptimizerConfig& cfg) {
  cfg.validate();
  const auto& space = lik.model().space;
  const int pa = space.dim_alpha();
  const int pb = space.dim_beta();
  if (stage.alpha.size() != pa) throw Error(ErrorCode::InvalidArgument, "first-stage alpha has the wrong dimension");
  FitResult fit;
  fit.mode = FitMode::TwoStep;
  fit.converged = stage.converged;
  fit.optimizer_runs = stage.optimizer_runs;
  fit.evaluations = stage.evaluations;
  fit.trace = stage.trace;

  Vector beta(0);
  if (pb > 0) {
    if (lik.has_linear_drift()) {
      beta = linear_drift_beta(lik, stage.alpha);
    } else {
      const auto init = slice(start_intervals(space, cfg), pa, pb);
      const auto res = maximize([&](const Vector& be) { return lik.h2(stage.alpha, be); }, space.lower().tail(pb),
                                space.upper().tail(pb), init, cfg);
      beta = res.x;
      fit.converged = fit.converged && res.converged;
      fit.optimizer_runs += 1;
      fit.evaluations += res.evaluations;
      const auto values = start_values(res);
      fit.trace.insert(fit.trace.end(), values.begin(), values.end());
    }
  }
  fit.theta = space.join(stage.alpha, beta);
  finalize(lik, fit);
  return fit;
}

FitResult fit_two_step(const PrecomputedPath& lik, const OptimizerConfig& cfg) {
  return fit_two_step_given_alpha(lik, fit_alpha_stage(lik, cfg), cfg);
}

FitResult fit_three_step(const PrecomputedPath& lik, const OptimizerConfig& cfg) {
  FitResult two = fit_two_step(lik, cfg);
  const auto& space = lik.model().space;
  if (space.dim_beta() == 0 || space.dim_alpha() == 0) {
    two.mode = FitMode::ThreeStep;
    return two;
  }
  const Vector beta = two.beta();
  VectorFn grad;
  if (lik.has_analytic_gradient())
    grad = [&](const Vector& al) {
      return Vector(lik.analytic_gradient(Objective::MGQLF, space.join(al, beta)).head(space.dim_alpha()));
    };
  const auto res = maximize_alpha(lik, cfg, [&](const Vector& al) { return lik.mgqlf(space.join(al, beta)); }, grad);
  FitResult fit;
  fit.mode = FitMode::ThreeStep;
  fit.theta = space.join(res.x, beta);
  fit.converged = two.converged && res.converged;
  fit.optimizer_runs = two.optimizer_runs + 1;
  fit.evaluations = two.evaluations + res.evaluations;
  fit.trace = two.trace;
  const auto values = start_values(res);
  fit.trace.insert(fit.trace.end(), values.begin(), values.end());
  finalize(lik, fit);
  return fit;
}

FitResult fit(const PrecomputedPath& lik, FitMode mode, const OptimizerConfig& cfg) {
  switch (mode) {
    case FitMode::Joint: return fit_joint(lik, cfg);
    case FitMode::TwoStep: return fit_two_step(lik, cfg);
    case FitMode::ThreeStep: return fit_three_step(lik, cfg);
  }
  return fit_joint(lik, cfg);
}

CovarianceEstimates cov_estimates(const PrecomputedPath& lik, const Vector& theta) {
  const auto& model = lik.model();
  const auto& space = model.space;
  const int pa = space.dim_alpha();
  const int pb = space.dim_beta();
  const int d = lik.dim();
  const int n = lik.n();
  const Vector alpha = space.alpha_of(theta);
  const Vector beta = space.beta_of(theta);
  const std::vector<Matrix> Sinv = lik.inverse_diffusion(alpha);
  const Matrix& X = lik.lagged_states();

  Vector T = Vector::Zero(pa);
  Matrix A = Matrix::Zero(pa, pa);
  Matrix G2 = Matrix::Zero(pb, pb);
  std::vector<Matrix> WdS(static_cast<std::size_t>(pa));
  for (int j = 0; j < n; ++j) {
    const Vector x = X.row(j).transpose();
    const Matrix& W = Sinv[static_cast<std::size_t>(j)];
    if (pa > 0) {
      const auto dS = diffusion_alpha_derivative(model, x, alpha);
      for (int k = 0; k < pa; ++k) {
        WdS[static_cast<std::size_t>(k)] = W * dS[static_cast<std::size_t>(k)];
        T[k] += WdS[static_cast<std::size_t>(k)].trace();
      }
      for (int k = 0; k < pa; ++k)
        for (int l = 0; l <= k; ++l) {
          const double v = (WdS[static_cast<std::size_t>(k)] * WdS[static_cast<std::size_t>(l)]).trace();
          A(k, l) += v;
          if (l != k) A(l, k) += v;
        }
    }
    if (pb > 0) {
      const Matrix db = drift_beta_derivative(model, x, alpha, beta);
      G2 += db.transpose() * W * db;
    }
  }
  T /= n;
  CovarianceEstimates c;
  c.K = T / d;
  c.Gamma1 = A / (2.0 * n) - T * T.transpose() / (2.0 * d);
  c.Gamma1 = 0.5 * (c.Gamma1 + c.Gamma1.transpose());
  c.Gamma2 = G2 / n;
  c.Gamma2 = 0.5 * (c.Gamma2 + c.Gamma2.transpose());

  const auto G1inv = spd_inverse(c.Gamma1);
  if (!G1inv) throw Error(ErrorCode::SingularGamma, "Gamma1 is not invertible; alpha may be non-identifiable");
  const auto G2inv = spd_inverse(c.Gamma2);
  if (!G2inv) throw Error(ErrorCode::SingularGamma, "Gamma2 is not invertible; beta may be non-identifiable");

  const int p = pa + pb;
  c.Sigma = Matrix::Zero(1 + p, 1 + p);
  const Vector GK = *G1inv * c.K;
  c.Sigma(0, 0) = 2.0 / d + c.K.dot(GK);
  c.Sigma.block(1, 0, pa, 1) = -GK;
  c.Sigma.block(0, 1, 1, pa) = -GK.transpose();
  c.Sigma.block(1, 1, pa, pa) = *G1inv;
  c.Sigma.block(1 + pa, 1 + pa, pb, pb) = *G2inv;
  return c;
}

ConfidenceInterval ci_for_h(const FitResult& fit, double gamma) {
  if (!(gamma > 0.0) || !(gamma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0, 1]");
  if (!fit.cov) throw Error(ErrorCode::SingularGamma, "covariance estimate unavailable");
  const boost::math::normal standard;
  const double z = gamma == 1.0 ? 0.0 : boost::math::quantile(boost::math::complement(standard, gamma / 2.0));
  const double half = z * fit.h_tilde / std::sqrt(static_cast<double>(fit.n)) * std::sqrt(fit.cov->h_variance());
  return {fit.h_tilde - half, fit.h_tilde + half};
}

ScalarEstimate kappa_estimate(const FitResult& fit, int n) {
  if (!(fit.h_tilde > 0.0) || n < 2) throw Error(ErrorCode::InvalidArgument, "need h > 0 and n >= 2");
  const double logn = std::log(static_cast<double>(n));
  const double v = fit.cov ? fit.cov->h_variance() : kNaN;
  return {-std::log(fit.h_tilde) / logn, std::sqrt(v) / (std::sqrt(static_cast<double>(n)) * logn)};
}

ScalarEstimate tau_estimate(const FitResult& fit, double h0_known) {
  if (!(h0_known > 0.0)) throw Error(ErrorCode::InvalidArgument, "h0 must be positive");
  const double tau = fit.h_tilde / h0_known;
  const double v = fit.cov ? fit.cov->h_variance() : kNaN;
  return {tau, tau * std::sqrt(v) / std::sqrt(static_cast<double>(fit.n))};
}

ObservationPath rescale_observations(const ObservationPath& path, double c) {
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
  ObservationPath out;
  out.values = c * path.values;
  out.meta = path.meta;
  return out;
}

double rescaled_stepsize(const ObservationPath& path, const DiffusionModel& model, const Vector& alpha, double c) {
  const Matrix dx = path.increments();
  const int n = path.n();
  const int d = path.dim();
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const Matrix S = eval_S(model, c * path.values.row(j).transpose(), alpha);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::SingularDiffusion, "diffusion matrix is not positive definite", static_cast<std::size_t>(j));
    const Vector v = dx.row(j).transpose();
    sum += v.dot(llt.solve(v));
  }
  return c * c * sum / (static_cast<double>(n) * d);
}

Matrix residuals(const PrecomputedPath& lik, const Vector& theta, double h) {
  const auto& model = lik.model();
  const Vector alpha = model.space.alpha_of(theta);
  const Matrix B = lik.drift_rows(alpha, model.space.beta_of(theta));
  const Matrix& X = lik.lagged_states();
  const Matrix& dX = lik.increments();
  const int d = lik.dim();
  const double root_h = std::sqrt(h);
  Matrix eps(lik.n(), d);
  for (int j = 0; j < lik.n(); ++j) {
    const Matrix a = model.a(X.row(j).transpose(), alpha);
    const Vector r = dX.row(j).transpose() - h * B.row(j).transpose().head(d);
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible())
      throw Error(ErrorCode::SingularDiffusion, "diffusion coefficient is not invertible", static_cast<std::size_t>(j));
    eps.row(j) = (lu.solve(r) / root_h).transpose();
  }
  return eps;
}

Matrix residuals(const PrecomputedPath& lik, const FitResult& fit) { return residuals(lik, fit.theta, fit.h_tilde); }

Matrix symmetric_sqrt(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

StandardizedEstimates standardized_estimates(const PrecomputedPath& lik, const FitResult& fit, const Vector& theta0) {
  const auto& space = lik.model().space;
  const double n = fit.n;
  const double nh = n * fit.h_tilde;
  auto check_pd = [](const Matrix& M, const char* block) {
    if (M.rows() == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw Error(ErrorCode::NonPDHessian, std::string("negated Hessian block is not positive definite: ") + block);
  };
  const Matrix Ia = -hessian_alpha(lik, Objective::MGQLF, fit.theta) / n;
  const Matrix Ib = -hessian_beta(lik, Objective::MGQLF, fit.theta) / nh;
  check_pd(Ia, "alpha");
  check_pd(Ib, "beta");
  StandardizedEstimates u;
  u.u_alpha = symmetric_sqrt(Ia) * (std::sqrt(n) * (fit.alpha() - space.alpha_of(theta0)));
  u.u_beta = symmetric_sqrt(Ib) * (std::sqrt(nh) * (fit.beta() - space.beta_of(theta0)));
  return u;
}

}  // namespace hfdiff
