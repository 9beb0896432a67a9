#include "hfdiff/catalog.hpp"

#include <cmath>

#include "hfdiff/error.hpp"

namespace hfdiff {

double eval_feature(std::string_view function, double x) {
  if (function == "1") return 1.0;
  if (function == "x") return x;
  if (function == "cos") return std::cos(x);
  if (function == "sin") return std::sin(x);
  if (function == "cos*sin") return std::cos(x) * std::sin(x);
  throw Error(ErrorCode::ConfigError, "unknown feature function '" + std::string(function) + "'");
}

namespace {

enum class FeatureId { One, X, Cos, Sin, CosSin };

FeatureId feature_id(std::string_view f) {
  eval_feature(f, 0.0);
  if (f == "1") return FeatureId::One;
  if (f == "x") return FeatureId::X;
  if (f == "cos") return FeatureId::Cos;
  if (f == "sin") return FeatureId::Sin;
  return FeatureId::CosSin;
}

std::function<Vector(double)> make_basis(const std::vector<Feature>& features) {
  std::vector<FeatureId> ids;
  for (const auto& f : features) ids.push_back(feature_id(f.function));
  return [ids](double x) {
    const double c = std::cos(x);
    const double s = std::sin(x);
    Vector v(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      double val = 1.0;
      switch (ids[k]) {
        case FeatureId::One: val = 1.0; break;
        case FeatureId::X: val = x; break;
        case FeatureId::Cos: val = c; break;
        case FeatureId::Sin: val = s; break;
        case FeatureId::CosSin: val = c * s; break;
      }
      v[static_cast<Eigen::Index>(k)] = val;
    }
    return v;
  };
}

std::string join_names(const std::vector<Feature>& features) {
  std::string out;
  for (const auto& f : features) {
    if (!out.empty()) out += "+";
    out += f.name + "*" + f.function;
  }
  return out.empty() ? "0" : out;
}

}  // namespace

DiffusionModel make_log_linear_model(const std::vector<Feature>& diffusion, const std::vector<Feature>& drift,
                                     const CatalogBounds& bounds, std::string label) {
  std::vector<Interval> ab(diffusion.size(), bounds.alpha);
  std::vector<Interval> bb(drift.size(), bounds.beta);
  std::vector<std::string> an, bn;
  for (const auto& f : diffusion) an.push_back(f.name);
  for (const auto& f : drift) bn.push_back(f.name);

  DiffusionModel m;
  m.label = label.empty() ? "exp(" + join_names(diffusion) + ") / " + join_names(drift) : std::move(label);
  m.dim = 1;
  m.space = ParamSpace(std::move(ab), std::move(bb), std::move(an), std::move(bn));

  auto basis = make_basis(diffusion);
  auto design = make_basis(drift);
  m.log_linear = LogLinearDiffusion{basis};
  m.linear_drift = LinearDrift{[design](const Vector& x) {
    const Vector g = design(x[0]);
    return Matrix(g.transpose());
  }};
  m.a = [basis](const Vector& x, const Vector& alpha) {
    Matrix a(1, 1);
    a(0, 0) = std::exp(0.5 * alpha.dot(basis(x[0])));
    return a;
  };
  m.b = [design](const Vector& x, const Vector&, const Vector& beta) {
    Vector b(1);
    b[0] = beta.dot(design(x[0]));
    return b;
  };
  m.dS_dalpha = [basis](const Vector& x, const Vector& alpha) {
    const Vector f = basis(x[0]);
    const double S = std::exp(alpha.dot(f));
    std::vector<Matrix> out;
    for (Eigen::Index k = 0; k < f.size(); ++k) out.push_back(Matrix::Constant(1, 1, f[k] * S));
    return out;
  };
  m.db_dbeta = [design](const Vector& x, const Vector&, const Vector&) {
    return Matrix(design(x[0]).transpose());
  };
  m.db_dalpha = [p = static_cast<Eigen::Index>(diffusion.size())](const Vector&, const Vector&, const Vector&) {
    return Matrix(Matrix::Zero(1, p));
  };
  return m;
}

std::vector<std::string> builtin_diffusion_keys() {
  return {"diff1", "diff2", "diff3", "diff4", "diff5", "diff6", "diff7"};
}

std::vector<std::string> builtin_drift_keys() { return {"drif1", "drif2", "drif3"}; }

std::vector<Feature> builtin_diffusion_features(std::string_view key) {
  const Feature a1{"alpha1", "cos"}, a2{"alpha2", "sin"}, a3{"alpha3", "cos*sin"};
  if (key == "diff1") return {a1, a2, a3};
  if (key == "diff2") return {a1, a2};
  if (key == "diff3") return {a1, a3};
  if (key == "diff4") return {a2, a3};
  if (key == "diff5") return {a1};
  if (key == "diff6") return {a2};
  if (key == "diff7") return {a3};
  throw Error(ErrorCode::ConfigError, "unknown diffusion key '" + std::string(key) + "'");
}

std::vector<Feature> builtin_drift_features(std::string_view key) {
  const Feature b1{"beta1", "x"}, b2{"beta2", "1"};
  if (key == "drif1") return {b1, b2};
  if (key == "drif2") return {b1};
  if (key == "drif3") return {b2};
  if (key == "zero") return {};
  throw Error(ErrorCode::ConfigError, "unknown drift key '" + std::string(key) + "'");
}

DiffusionModel make_builtin_model(std::string_view diffusion_key, std::string_view drift_key,
                                  const CatalogBounds& bounds) {
  return make_log_linear_model(builtin_diffusion_features(diffusion_key), builtin_drift_features(drift_key), bounds,
                               std::string(diffusion_key) + "/" + std::string(drift_key));
}

}  // namespace hfdiff
