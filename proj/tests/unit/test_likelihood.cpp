#include <doctest.h>

#include <numbers>
#include <random>

#include <boost/math/tools/minima.hpp>

#include "hfdiff/error.hpp"
#include "hfdiff/likelihood.hpp"
#include "support.hpp"

using namespace hfdiff;
using hfdiff::testing::constant_model;
using hfdiff::testing::path_from_increments;
using hfdiff::testing::rel_err;
using hfdiff::testing::vec;

namespace {

// Straight-loop GQLF with no caching or fast paths.
double naive_gqlf(const ObservationPath& path, const DiffusionModel& m, const Vector& theta, double h) {
  const int pa = m.space.dim_alpha();
  const Vector alpha = theta.head(pa);
  const Vector beta = theta.tail(theta.size() - pa);
  const int d = path.dim();
  double total = 0.0;
  for (int j = 1; j <= path.n(); ++j) {
    const Vector x = path.values.row(j - 1).transpose();
    const Vector dx = (path.values.row(j) - path.values.row(j - 1)).transpose();
    const Matrix a = m.a(x, alpha);
    const Matrix S = a * a.transpose();
    const Vector r = dx - h * m.b(x, alpha, beta);
    total += std::log(std::pow(2.0 * std::numbers::pi * h, d) * S.determinant()) + r.dot(S.inverse() * r) / h;
  }
  return -0.5 * total;
}

double naive_h_of_alpha(const ObservationPath& path, const DiffusionModel& m, const Vector& alpha) {
  double total = 0.0;
  for (int j = 1; j <= path.n(); ++j) {
    const Vector x = path.values.row(j - 1).transpose();
    const Vector dx = (path.values.row(j) - path.values.row(j - 1)).transpose();
    const Matrix a = m.a(x, alpha);
    total += dx.dot((a * a.transpose()).inverse() * dx);
  }
  return total / (path.n() * path.dim());
}

Vector random_theta(const DiffusionModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  Vector t(m.space.dim());
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = U(rng);
  return t;
}

}  // namespace

TEST_CASE("gqlf by hand") {
  const auto m = constant_model(1, 1.0, vec({0.0}));
  const auto path = path_from_increments(vec({1.0, -1.0}), vec({0.0}));
  const double expected = -std::log(2.0 * std::numbers::pi) - 1.0;
  CHECK(gqlf(path, m, vec({0.0, 0.0}), 1.0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("gqlf matches a straight-loop oracle on a study path") {
  const auto plan = hfdiff::testing::study_plan(2000, 101);
  const auto path = simulate_path(plan);
  const Vector theta = vec({2.0, -1.0, -1.0});
  const double fast = gqlf(path, plan.model, theta, plan.h0);
  CHECK(rel_err(fast, naive_gqlf(path, plan.model, theta, plan.h0)) < 1e-10);
  const auto generic = plan.model.generic();
  CHECK(rel_err(gqlf(path, generic, theta, plan.h0), fast) < 1e-10);
}

TEST_CASE("without drift the GQLF peaks at h(alpha)") {
  const auto m = make_builtin_model("diff4", "zero");
  const auto path = hfdiff::testing::study_path(1000, 5);
  const PrecomputedPath lik(path, m);
  const Vector alpha = vec({1.5, -0.5});
  const double h = lik.h_of_alpha(alpha);
  const auto [hmax, fmin] = boost::math::tools::brent_find_minima(
      [&](double t) { return -lik.gqlf(alpha, t); }, 0.1 * h, 10.0 * h, 60);
  (void)fmin;
  CHECK(hmax == doctest::Approx(h).epsilon(1e-7));
  CHECK(lik.h_star(alpha) == h);
}

TEST_CASE("h(alpha) examples") {
  const auto m = constant_model(1, 1.0, vec({0.0}));
  const auto path = path_from_increments(Vector::Constant(4, 0.1), vec({0.0}));
  CHECK(h_of_alpha(path, m, vec({0.0})) == doctest::Approx(0.01).epsilon(1e-14));
  const auto m2 = constant_model(1, std::sqrt(2.0), vec({0.0}));
  CHECK(h_of_alpha(path, m2, vec({0.0})) == doctest::Approx(0.005).epsilon(1e-14));

  Matrix dx(3, 2);
  dx << 0.1, -0.2, 0.3, 0.05, -0.4, 0.25;
  const auto id2 = constant_model(2, 1.0, Vector::Zero(2));
  const auto p2 = path_from_increments(dx, Vector::Zero(2));
  double oracle = 0.0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 2; ++i) oracle += dx(j, i) * dx(j, i);
  oracle /= 6.0;
  CHECK(h_of_alpha(p2, id2, vec({0.0})) == doctest::Approx(oracle).epsilon(1e-14));

  const auto zero = path_from_increments(Vector::Zero(3), vec({1.0}));
  try {
    h_of_alpha(zero, m, vec({0.0}));
    FAIL("expected DegenerateData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateData);
  }
}

TEST_CASE("h(alpha) matches the loop oracle in two dimensions") {
  DiffusionModel m;
  m.dim = 2;
  m.space = ParamSpace({{-2, 2}}, {});
  m.a = [](const Vector& x, const Vector& al) {
    Matrix A(2, 2);
    A << std::exp(al[0] * std::cos(x[0])), 0.2 * std::sin(x[1]), 0.2 * std::sin(x[1]), 1.0 + 0.5 * x[0] * x[0];
    return A;
  };
  m.b = [](const Vector& x, const Vector&, const Vector&) { return Vector(-x); };
  const Matrix dx = dw_increments(4, 300, 2, 0.01);
  const auto path = path_from_increments(dx, vec({0.2, -0.1}));
  const Vector alpha = vec({0.7});
  CHECK(rel_err(h_of_alpha(path, m, alpha), naive_h_of_alpha(path, m, alpha)) < 1e-12);
  const double h = 0.013;
  CHECK(rel_err(gqlf(path, m, alpha, h), naive_gqlf(path, m, alpha, h)) < 1e-10);
}

TEST_CASE("h* is a stationary point of h -> gqlf") {
  const auto plan = hfdiff::testing::study_plan(2000, 12);
  const auto path = simulate_path(plan);
  const PrecomputedPath lik(path, plan.model);
  for (const Vector& theta : {vec({2.0, -1.0, -1.0}), vec({1.0, 0.5, -4.0})}) {
    const double hs = lik.h_star(theta);
    REQUIRE(hs > 0.0);
    const double e = 1e-4 * hs;
    const double d1 = (lik.gqlf(theta, hs + e) - lik.gqlf(theta, hs - e)) / (2 * e);
    const double d2 = (lik.gqlf(theta, hs + e) - 2 * lik.gqlf(theta, hs) + lik.gqlf(theta, hs - e)) / (e * e);
    CHECK(std::abs(d1) < 1e-6 * std::abs(d2) * hs);
    const double left = lik.gqlf(theta, 0.9 * hs) - lik.gqlf(theta, 0.9 * hs - e);
    const double right = lik.gqlf(theta, 1.1 * hs + e) - lik.gqlf(theta, 1.1 * hs);
    CHECK(left > 0.0);
    CHECK(right < 0.0);
  }
}

TEST_CASE("mgqlf identities on random inputs") {
  std::mt19937_64 rng(2024);
  const std::vector<std::pair<const char*, const char*>> pairs{{"diff1", "drif1"}, {"diff4", "drif2"},
                                                               {"diff7", "drif3"}, {"diff2", "zero"}};
  for (int k = 0; k < 100; ++k) {
    const auto [dk, bk] = pairs[static_cast<std::size_t>(k) % pairs.size()];
    const auto m = make_builtin_model(dk, bk);
    const auto path = hfdiff::testing::study_path(300 + 7 * k, 1000 + static_cast<std::uint64_t>(k));
    const PrecomputedPath lik(path, m);
    const Vector theta = random_theta(m, rng);
    const Vector alpha = theta.head(m.space.dim_alpha());
    const Vector beta = theta.tail(m.space.dim_beta());
    const double mg = lik.mgqlf(theta);
    CHECK(rel_err(mg, lik.gqlf(theta, lik.h_of_alpha(alpha))) < 1e-10);
    CHECK(rel_err(mg, lik.mgqlf_constant() + lik.h1(alpha) + lik.h2(alpha, beta)) < 1e-10);
    const double n = path.n();
    CHECK(lik.mgqlf_constant() == doctest::Approx(-0.5 * n * (1.0 + std::log(2.0 * std::numbers::pi))));
  }
}

TEST_CASE("drift-free models ignore beta and have h2 = 0") {
  const auto m = constant_model(1, 1.3, vec({0.0}));
  const auto path = hfdiff::testing::study_path(500, 8);
  const PrecomputedPath lik(path, m);
  CHECK(lik.mgqlf(vec({0.2, -0.7})) == lik.mgqlf(vec({0.2, 0.9})));
  CHECK(lik.h2(vec({0.2}), vec({0.5})) == 0.0);
}

TEST_CASE("h1 scale invariance and its d = 1 collapse") {
  const auto path = hfdiff::testing::study_path(1000, 21);
  const Matrix dx = path.increments();
  const double n = path.n();
  const PrecomputedPath unit(path, constant_model(1, 1.0, vec({0.0})));
  CHECK(unit.h1(vec({0.0})) == doctest::Approx(-0.5 * n * std::log(dx.squaredNorm() / n)).epsilon(1e-13));

  const auto m = make_builtin_model("diff4", "drif2");
  auto scaled = m;
  const double kappa = 3.7;
  scaled.a = [a = m.a, kappa](const Vector& x, const Vector& al) { return Matrix(std::sqrt(kappa) * a(x, al)); };
  scaled.log_linear.reset();
  scaled.dS_dalpha.reset();
  const PrecomputedPath l0(path, m);
  const PrecomputedPath l1(path, scaled);
  const Vector alpha = vec({1.2, -0.3});
  CHECK(rel_err(l0.h1(alpha), l1.h1(alpha)) < 1e-12);
  CHECK(std::abs(l0.h_of_alpha(alpha) / kappa - l1.h_of_alpha(alpha)) <= 1e-12 * l1.h_of_alpha(alpha));
}

TEST_CASE("h2 is exactly quadratic for a linear drift") {
  const auto m = make_builtin_model("diff4", "drif2");
  const auto path = hfdiff::testing::study_path(1500, 33);
  const PrecomputedPath lik(path, m);
  const Vector alpha = vec({1.9, -0.8});
  auto f = [&](double b) { return lik.h2(alpha, vec({b})); };
  // parabola through -1, 0, 1
  const double c0 = f(0.0);
  const double c1 = 0.5 * (f(1.0) - f(-1.0));
  const double c2 = 0.5 * (f(1.0) + f(-1.0)) - c0;
  const auto q = lik.drift_quadratic(alpha);
  CHECK(c0 == 0.0);
  CHECK(rel_err(c1, q.u[0]) < 1e-10);
  CHECK(rel_err(c2, -0.5 * q.h * q.M(0, 0)) < 1e-10);
  for (double b : {-3.3, 0.4, 2.1}) CHECK(rel_err(f(b), c1 * b + c2 * b * b) < 1e-10);

  // straight loop: h2 = sum dX S^-1 b - (h/2) sum S^-1 b^2
  double cross = 0.0, quad = 0.0;
  const double h = lik.h_of_alpha(alpha);
  for (int j = 1; j <= path.n(); ++j) {
    const double x = path.values(j - 1, 0);
    const double S = std::exp(alpha[0] * std::sin(x) + alpha[1] * std::cos(x) * std::sin(x));
    const double b = -0.6 * x;
    cross += (path.values(j, 0) - x) * b / S;
    quad += b * b / S;
  }
  CHECK(rel_err(f(-0.6), cross - 0.5 * h * quad) < 1e-10);
}

TEST_CASE("Hessian in beta is constant for a linear drift") {
  const auto m = make_builtin_model("diff1", "drif1");
  const auto path = hfdiff::testing::study_path(1000, 4);
  const PrecomputedPath lik(path, m);
  const Matrix H1 = hessian_beta(lik, Objective::MGQLF, vec({0.1, 1.8, -0.9, -1.0, 0.2}));
  const Matrix H2 = hessian_beta(lik, Objective::MGQLF, vec({0.1, 1.8, -0.9, 3.0, -2.0}));
  CHECK((H1 - H2).cwiseAbs().maxCoeff() == 0.0);
  const Matrix Hn = numeric_hessian([&](const Vector& b) { return lik.h2(vec({0.1, 1.8, -0.9}), b); }, vec({-1.0, 0.2}));
  CHECK((H1 - Hn).cwiseAbs().maxCoeff() < 1e-4 * H1.cwiseAbs().maxCoeff());
}

TEST_CASE("analytic and numeric gradients agree on builtin models") {
  std::mt19937_64 rng(8);
  const auto path = hfdiff::testing::study_path(1000, 61);
  for (const auto& dk : builtin_diffusion_keys())
    for (const auto& bk : builtin_drift_keys()) {
      const auto m = make_builtin_model(dk, bk);
      const PrecomputedPath lik(path, m);
      REQUIRE(lik.has_analytic_gradient());
      const Vector theta = random_theta(m, rng);
      const Vector alpha = theta.head(m.space.dim_alpha());
      const Vector beta = theta.tail(m.space.dim_beta());
      const Vector g1 = lik.analytic_gradient(Objective::H1, alpha);
      const Vector n1 = numeric_gradient([&](const Vector& a) { return lik.h1(a); }, alpha);
      CHECK((g1 - n1).norm() <= 1e-4 * std::max(1.0, n1.norm()));
      const Vector g2 = lik.analytic_gradient(Objective::H2, theta);
      const Vector n2 = numeric_gradient(
          [&](const Vector& t) { return lik.h2(t.head(alpha.size()), t.tail(beta.size())); }, theta);
      CHECK((g2 - n2).norm() <= 1e-4 * std::max(1.0, n2.norm()));
      const Vector gm = lik.analytic_gradient(Objective::MGQLF, theta);
      const Vector nm = numeric_gradient([&](const Vector& t) { return lik.mgqlf(t); }, theta);
      CHECK((gm - nm).norm() <= 1e-4 * std::max(1.0, nm.norm()));
      CHECK((Vector(grad_hessian(lik, theta, Objective::H1, 1)) - g1).norm() == 0.0);
    }
}

TEST_CASE("memoized terms follow the current alpha") {
  const auto m = make_builtin_model("diff1", "drif1");
  const auto path = hfdiff::testing::study_path(800, 90);
  const PrecomputedPath lik(path, m);
  const Vector a1 = vec({0.1, 2.0, -1.0});
  const Vector a2 = vec({-0.3, 1.0, 0.5});
  const double first = lik.h1(a1);
  lik.h1(a2);
  CHECK(lik.h1(a1) == first);
  CHECK(PrecomputedPath(path, m).h1(a2) == lik.h1(a2));
}

TEST_CASE("singular diffusion names the observation") {
  DiffusionModel m = constant_model(1, 1.0, vec({0.0}));
  m.a = [](const Vector& x, const Vector&) { return Matrix::Constant(1, 1, x[0]); };
  const auto path = path_from_increments(vec({-1.0, 0.5, 0.5}), vec({1.0}));
  try {
    h_of_alpha(path, m, vec({0.0}));
    FAIL("expected SingularDiffusion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularDiffusion);
    CHECK(e.index() == std::optional<std::size_t>(1));
  }
}
