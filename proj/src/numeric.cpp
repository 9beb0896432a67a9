#include "hfdiff/numeric.hpp"

#include <cmath>
#include <limits>

#include "hfdiff/error.hpp"

namespace hfdiff {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

Vector steps_for(const Vector& at, double base, const std::optional<StencilBox>& box) {
  Vector h(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    h[i] = base * std::max(1.0, std::abs(at[i]));
    if (box) {
      const double room = std::min(at[i] - box->lower[i], box->upper[i] - at[i]);
      if (room > 1e-3 * h[i] && room < h[i]) h[i] = room;
    }
  }
  return h;
}

double checked(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteDerivative, "stencil evaluation is not finite");
  return v;
}

}  // namespace

Vector numeric_gradient(const ScalarFn& f, const Vector& at, const std::optional<StencilBox>& box) {
  const Vector h = steps_for(at, std::cbrt(kEps), box);
  Vector g(at.size());
  Vector x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    x[i] = at[i] + h[i];
    const double fp = checked(f(x));
    x[i] = at[i] - h[i];
    const double fm = checked(f(x));
    x[i] = at[i];
    g[i] = (fp - fm) / (2.0 * h[i]);
  }
  return g;
}

Matrix numeric_hessian(const ScalarFn& f, const Vector& at, const std::optional<StencilBox>& box) {
  const Eigen::Index k = at.size();
  const Vector h = steps_for(at, std::sqrt(std::sqrt(kEps)), box);
  Matrix H(k, k);
  const double f0 = checked(f(at));
  Vector x = at;
  for (Eigen::Index i = 0; i < k; ++i) {
    x[i] = at[i] + h[i];
    const double fp = checked(f(x));
    x[i] = at[i] - h[i];
    const double fm = checked(f(x));
    x[i] = at[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      auto eval = [&](double si, double sj) {
        x[i] = at[i] + si * h[i];
        x[j] = at[j] + sj * h[j];
        const double v = checked(f(x));
        x[i] = at[i];
        x[j] = at[j];
        return v;
      };
      const double mixed = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h[i] * h[j]);
      H(i, j) = mixed;
      H(j, i) = mixed;
    }
  }
  return 0.5 * (H + H.transpose());
}

Matrix numeric_jacobian(const VectorFn& f, const Vector& at) {
  const Vector h = steps_for(at, std::cbrt(kEps), std::nullopt);
  Matrix J;
  Vector x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    x[i] = at[i] + h[i];
    const Vector fp = f(x);
    x[i] = at[i] - h[i];
    const Vector fm = f(x);
    x[i] = at[i];
    if (!fp.allFinite() || !fm.allFinite())
      throw Error(ErrorCode::NonFiniteDerivative, "stencil evaluation is not finite");
    if (J.size() == 0) J.resize(fp.size(), at.size());
    J.col(i) = (fp - fm) / (2.0 * h[i]);
  }
  return J;
}

}  // namespace hfdiff
