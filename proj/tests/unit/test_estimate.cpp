#include <doctest.h>

#include <random>

#include <boost/math/tools/minima.hpp>

#include "hfdiff/error.hpp"
#include "support.hpp"

using namespace hfdiff;
using hfdiff::testing::constant_model;
using hfdiff::testing::path_from_increments;
using hfdiff::testing::rel_err;
using hfdiff::testing::study_optimizer_for;
using hfdiff::testing::vec;

namespace {

// Fine grid followed by Brent refinement over [lo, hi].
double grid_argmax(const std::function<double(double)>& f, double lo, double hi) {
  double best = lo, fbest = -std::numeric_limits<double>::infinity();
  const int steps = 4000;
  for (int i = 0; i <= steps; ++i) {
    const double x = lo + (hi - lo) * i / steps;
    const double v = f(x);
    if (v > fbest) fbest = v, best = x;
  }
  const double w = (hi - lo) / steps;
  return boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, best - w, best + w, 50).first;
}

FitResult manual_fit(double h, int n, double h_variance) {
  FitResult f;
  f.n = n;
  f.d = 1;
  f.h_tilde = h;
  CovarianceEstimates c;
  c.K = Vector::Zero(0);
  c.Sigma = Matrix::Constant(1, 1, h_variance);
  f.cov = c;
  return f;
}

}  // namespace

TEST_CASE("drift-free model: the joint fit is the argmax of h1") {
  const auto m = make_builtin_model("diff4", "zero");
  const auto path = hfdiff::testing::study_path(2000, 14);
  const PrecomputedPath lik(path, m);
  const auto cfg = study_optimizer_for(m);
  const FitResult j = fit_joint(lik, cfg);
  const AlphaStage a = fit_alpha_stage(lik, cfg);
  CHECK((j.alpha() - a.alpha).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(j.loglik == doctest::Approx(lik.mgqlf_constant() + a.h1).epsilon(1e-12));
  CHECK(j.p_beta == 0);
}

TEST_CASE("one-parameter diffusion: optimizer agrees with a grid search") {
  const auto m = make_builtin_model("diff6", "zero");
  const auto path = hfdiff::testing::study_path(2000, 15);
  const PrecomputedPath lik(path, m);
  const FitResult f = fit_joint(lik, study_optimizer_for(m));
  const double oracle = grid_argmax([&](double a) { return lik.h1(vec({a})); }, -10.0, 10.0);
  CHECK(std::abs(f.theta[0] - oracle) < 1e-5);
  CHECK(f.converged);
}

TEST_CASE("closed-form linear-drift beta") {
  const auto m = make_builtin_model("diff1", "drif1");
  const auto path = hfdiff::testing::study_path(3000, 16);
  const PrecomputedPath lik(path, m);
  auto cfg = study_optimizer_for(m);
  const FitResult two = fit_two_step(lik, cfg);
  const Vector alpha = two.alpha();
  const auto q = lik.drift_quadratic(alpha);
  const Vector score = q.u - q.h * q.M * two.beta();
  CHECK(score.norm() <= 1e-10 * (q.u.norm() + q.h * (q.M * two.beta()).norm()));
  CHECK((two.beta() - (q.h * q.M).ldlt().solve(q.u)).norm() < 1e-12 * (1.0 + two.beta().norm()));

  // the generic route maximizes h2 numerically
  const PrecomputedPath generic(path, m.generic());
  cfg.f_tol = 1e-15;
  cfg.x_tol = 1e-12;
  const Vector b_opt = maximize(
      [&](const Vector& b) { return generic.h2(alpha, b); }, vec({-10.0, -10.0}), vec({10.0, 10.0}),
      {{-2.0, 0.0}, {-2.0, 0.0}}, cfg).x;
  CHECK((b_opt - two.beta()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("projected gradient resolves a large flat quadratic below sqrt(eps)") {
  // values near 1e4 hide steps that change f by less than rounding
  const Vector c = vec({0.3, -1.7});
  const auto f = [&](const Vector& x) {
    const Vector e = x - c;
    return 1e4 - 0.5 * (40.0 * e[0] * e[0] + 2.0 * e[0] * e[1] + 0.5 * e[1] * e[1]);
  };
  const auto g = [&](const Vector& x) {
    const Vector e = x - c;
    return vec({-(40.0 * e[0] + e[1]), -(e[0] + 0.5 * e[1])});
  };
  OptimizerConfig cfg;
  cfg.method = OptimizerMethod::ProjectedGradient;
  cfg.multistart = 2;
  cfg.f_tol = 1e-15;
  cfg.x_tol = 1e-13;
  cfg.max_iters = 100000;
  const auto r = maximize(f, vec({-5.0, -5.0}), vec({5.0, 5.0}), {{-1.0, 1.0}, {-1.0, 1.0}}, cfg, g);
  CHECK((r.x - c).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("drift model on drift-free data recovers the quadratic argmax") {
  const auto m = make_builtin_model("diff4", "drif1");
  SimulationPlan plan = hfdiff::testing::study_plan(2000, 18);
  plan.model = make_builtin_model("diff4", "zero");
  plan.beta = Vector(0);
  const auto path = simulate_path(plan);
  const PrecomputedPath lik(path, m);
  const FitResult f = fit_two_step(lik, study_optimizer_for(m));
  const auto q = lik.drift_quadratic(f.alpha());
  CHECK((f.beta() - (q.h * q.M).ldlt().solve(q.u)).norm() < 1e-10);
  CHECK(std::abs(f.beta()[0]) < 5.0 * f.stderr_theta[2]);
}

TEST_CASE("three-step estimates") {
  const auto m = make_builtin_model("diff4", "drif2");
  const auto path = hfdiff::testing::study_path(5000, 19);
  const PrecomputedPath lik(path, m);
  const auto cfg = study_optimizer_for(m);
  const FitResult two = fit_two_step(lik, cfg);
  const FitResult three = fit_three_step(lik, cfg);
  CHECK(three.beta() == two.beta());
  for (int k = 0; k < 2; ++k) CHECK(std::abs(three.theta[k] - two.theta[k]) < 5.0 * two.stderr_theta[k]);

  const auto m1 = make_builtin_model("diff6", "drif2");
  const PrecomputedPath l1(path, m1);
  const FitResult t1 = fit_three_step(l1, study_optimizer_for(m1));
  const double oracle = grid_argmax([&](double a) { return l1.mgqlf(vec({a, t1.theta[1]})); }, -10.0, 10.0);
  CHECK(std::abs(t1.theta[0] - oracle) < 1e-5);

  const auto m0 = make_builtin_model("diff4", "zero");
  const PrecomputedPath l0(path, m0);
  const auto c0 = study_optimizer_for(m0);
  CHECK(fit_three_step(l0, c0).theta == fit_two_step(l0, c0).theta);
}

TEST_CASE("constant diffusion makes Gamma1 singular") {
  const auto m = constant_model(1, 1.0, vec({0.0}));
  const auto path = hfdiff::testing::study_path(500, 20);
  const PrecomputedPath lik(path, m);
  try {
    cov_estimates(lik, vec({0.0, 0.0}));
    FAIL("expected SingularGamma");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularGamma);
  }
}

TEST_CASE("Gamma1 is half the sample variance of the log-diffusion feature") {
  const auto m = make_builtin_model("diff6", "drif2");
  const auto path = hfdiff::testing::study_path(2000, 22);
  const PrecomputedPath lik(path, m);
  const auto cov = cov_estimates(lik, vec({0.0, -1.0}));
  const Vector s = lik.lagged_states().col(0).array().sin();
  const double mean = s.mean();
  const double gamma1 = 0.5 * s.array().square().mean() - 0.5 * mean * mean;
  CHECK(cov.Gamma1(0, 0) == doctest::Approx(gamma1).epsilon(1e-12));
  CHECK(cov.K[0] == doctest::Approx(mean).epsilon(1e-12));
  // S = 1 at alpha = 0 and b = beta x
  const Vector x = lik.lagged_states().col(0);
  CHECK(cov.Gamma2(0, 0) == doctest::Approx(x.squaredNorm() / x.size()).epsilon(1e-12));
  CHECK(cov.Sigma(0, 0) == doctest::Approx(2.0 + mean * mean / gamma1).epsilon(1e-12));
}

TEST_CASE("covariance structure on random fits") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  const auto m = make_builtin_model("diff1", "drif1");
  for (int k = 0; k < 100; ++k) {
    const auto path = hfdiff::testing::study_path(400, 500 + static_cast<std::uint64_t>(k));
    const PrecomputedPath lik(path, m);
    const Vector theta = vec({U(rng), 2.0 + U(rng), -1.0 + U(rng), -1.0 + U(rng), U(rng)});
    const auto c = cov_estimates(lik, theta);
    CHECK((c.Gamma1 - c.Gamma1.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.Gamma2 - c.Gamma2.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(c.Gamma1).eigenvalues().minCoeff() >= -1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(c.Gamma2).eigenvalues().minCoeff() >= -1e-12);
    REQUIRE(c.Sigma.rows() == 6);
    CHECK(c.Sigma.block(0, 4, 4, 2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.Sigma.block(4, 0, 2, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.Sigma - c.Sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("confidence interval for h") {
  const FitResult f = manual_fit(0.01, 5000, 2.0);
  const auto zero = ci_for_h(f, 1.0);
  CHECK(zero.lower == 0.01);
  CHECK(zero.upper == 0.01);
  const auto ci = ci_for_h(f, 0.05);
  const double half = 1.959963984540054 * 0.01 * std::sqrt(2.0) / std::sqrt(5000.0);
  CHECK(0.5 * (ci.upper - ci.lower) == doctest::Approx(half).epsilon(1e-12));
  CHECK(0.5 * (ci.upper + ci.lower) == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("kappa and tau") {
  const int n = 5000;
  CHECK(kappa_estimate(manual_fit(1.0 / n, n, 2.0), n).value == doctest::Approx(1.0).epsilon(1e-15));
  const auto k = kappa_estimate(manual_fit(std::pow(n, -2.0 / 3.0), n, 2.0), n);
  CHECK(k.value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(k.stderr == doctest::Approx(std::sqrt(2.0) / (std::sqrt(double(n)) * std::log(double(n)))));
  CHECK(tau_estimate(manual_fit(0.02, n, 2.0), 0.02).value == 1.0);
  CHECK(tau_estimate(manual_fit(0.04, n, 2.0), 0.02).value == 2.0 * tau_estimate(manual_fit(0.02, n, 2.0), 0.02).value);
  CHECK(tau_estimate(manual_fit(0.02, n, 2.0), 0.02).stderr == doctest::Approx(std::sqrt(2.0 / n)));
}

TEST_CASE("rescaling observations") {
  const auto path = hfdiff::testing::study_path(1000, 23);
  const auto unit = constant_model(1, 1.0, vec({0.0}));
  const double h = h_of_alpha(path, unit, vec({0.0}));
  CHECK(h_of_alpha(rescale_observations(path, 3.0), unit, vec({0.0})) == doctest::Approx(9.0 * h).epsilon(1e-13));
  CHECK(rescale_observations(path, 1.0).values == path.values);
  const auto m = make_builtin_model("diff4", "drif2");
  const Vector alpha = vec({2.0, -1.0});
  CHECK(rel_err(rescaled_stepsize(path, m, alpha, 2.0), h_of_alpha(rescale_observations(path, 2.0), m, alpha)) < 1e-10);
  CHECK(rescaled_stepsize(path, m, alpha, 1.0) == doctest::Approx(h_of_alpha(path, m, alpha)).epsilon(1e-12));
}

TEST_CASE("residuals invert the Euler increment") {
  const auto m = make_builtin_model("diff4", "drif2");
  const Vector theta = vec({2.0, -1.0, -1.0});
  const double h = 0.003;
  const Matrix z = dw_increments(31, 400, 1, 1.0);
  ObservationPath path;
  path.values = Matrix::Zero(401, 1);
  path.values(0, 0) = 0.7;
  for (int j = 0; j < 400; ++j) {
    const Vector x = path.values.row(j).transpose();
    path.values(j + 1, 0) = x[0] + h * m.b(x, theta.head(2), theta.tail(1))[0] +
                            std::sqrt(h) * m.a(x, theta.head(2))(0, 0) * z(j, 0);
  }
  const PrecomputedPath lik(path, m);
  CHECK((residuals(lik, theta, h) - z).cwiseAbs().maxCoeff() < 1e-12);

  Matrix dx(3, 2);
  dx << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6;
  const auto id2 = constant_model(2, 1.0, Vector::Zero(2));
  const PrecomputedPath l2(path_from_increments(dx, Vector::Zero(2)), id2);
  CHECK((residuals(l2, vec({0.0, 0.0}), 1.0) - dx).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("residual moments on a study fit") {
  const auto m = make_builtin_model("diff1", "drif1");
  const auto path = hfdiff::testing::study_path(5000, 24);
  const PrecomputedPath lik(path, m);
  const FitResult f = fit_two_step(lik, study_optimizer_for(m));
  const Vector r = residuals(lik, f).col(0);
  const double mean = r.mean();
  const double var = (r.array() - mean).square().sum() / (r.size() - 1);
  CHECK(std::abs(mean) < 0.05);
  CHECK(var >= 0.9);
  CHECK(var <= 1.1);
}

TEST_CASE("standardized estimates") {
  const auto m = make_builtin_model("diff4", "drif2");
  const auto path = hfdiff::testing::study_path(3000, 25);
  const PrecomputedPath lik(path, m);
  const FitResult f = fit_two_step(lik, study_optimizer_for(m));
  const auto at_fit = standardized_estimates(lik, f, f.theta);
  CHECK(at_fit.u_alpha.norm() == 0.0);
  CHECK(at_fit.u_beta.norm() == 0.0);

  const Vector theta0 = vec({2.0, -1.0, -1.0});
  const auto u = standardized_estimates(lik, f, theta0);
  const double n = lik.n();
  const Matrix A = -hessian_alpha(lik, Objective::MGQLF, f.theta) / n;
  const Vector da = std::sqrt(n) * (f.alpha() - theta0.head(2));
  const Matrix L = A.llt().matrixL();
  const Vector uc = L.transpose() * da;
  CHECK(std::abs(u.u_alpha.squaredNorm() - uc.squaredNorm()) < 1e-8 * (1.0 + uc.squaredNorm()));
  const Matrix R = symmetric_sqrt(A);
  CHECK((R * R - A).cwiseAbs().maxCoeff() < 1e-12 * A.cwiseAbs().maxCoeff());
  CHECK((R - R.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fitting invariants") {
  const auto m = make_builtin_model("diff4", "drif2");
  const auto path = hfdiff::testing::study_path(3000, 26);
  const PrecomputedPath lik(path, m);
  const auto cfg = study_optimizer_for(m);
  const FitResult two = fit_two_step(lik, cfg);
  const FitResult joint = fit_joint(lik, cfg);
  CHECK(joint.loglik >= two.loglik - cfg.f_tol * std::abs(two.loglik));
  CHECK(two.h_tilde == lik.h_of_alpha(two.alpha()));

  // interior optimum: first-order condition
  const Vector g = lik.analytic_gradient(Objective::MGQLF, joint.theta);
  CHECK(g.norm() < 1e-4 * (1.0 + std::abs(joint.loglik)));

  // deterministic given the path and config
  const FitResult again = fit_joint(PrecomputedPath(path, m), cfg);
  CHECK(again.theta == joint.theta);
  CHECK(again.trace == joint.trace);

  // scaling the diffusion leaves alpha' unchanged and divides h' by kappa
  const double kappa = 2.5;
  auto scaled = m;
  scaled.a = [a = m.a, kappa](const Vector& x, const Vector& al) { return Matrix(std::sqrt(kappa) * a(x, al)); };
  scaled.log_linear.reset();
  scaled.dS_dalpha = [d = *m.dS_dalpha, kappa](const Vector& x, const Vector& al) {
    auto out = d(x, al);
    for (auto& M : out) M *= kappa;
    return out;
  };
  const PrecomputedPath ls(path, scaled);
  const FitResult s = fit_two_step(ls, cfg);
  CHECK((s.alpha() - two.alpha()).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(s.h_tilde == doctest::Approx(two.h_tilde / kappa).epsilon(1e-5));

  // joint fit with beta profiled agrees with the full simplex search
  const FitResult full = fit_joint(lik, cfg, false);
  CHECK(std::abs(full.loglik - joint.loglik) < 1e-6 * std::abs(joint.loglik));
}

TEST_CASE("boundary optima are flagged") {
  const auto m = make_builtin_model("diff4", "drif2", CatalogBounds{{-0.5, 0.5}, {-10.0, 10.0}});
  const auto path = hfdiff::testing::study_path(2000, 27);
  const PrecomputedPath lik(path, m);
  const FitResult f = fit_two_step(lik, study_optimizer_for(m));
  CHECK(f.at_boundary);
  CHECK_FALSE(f.converged);
  CHECK_FALSE(f.warnings.empty());
}

TEST_CASE("mode names round-trip") {
  for (FitMode mode : {FitMode::Joint, FitMode::TwoStep, FitMode::ThreeStep})
    CHECK(fit_mode_from_string(to_string(mode)) == mode);
  CHECK_THROWS_AS(fit_mode_from_string("four-step"), Error);
}
