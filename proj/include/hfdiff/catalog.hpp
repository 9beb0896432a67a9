#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hfdiff/model.hpp"

namespace hfdiff {

// Scalar feature of the state used by the log-linear diffusion and linear
// drift families: "1", "x", "cos", "sin", "cos*sin".
struct Feature {
  std::string name;       // parameter name attached to the feature
  std::string function;   // one of the feature functions above
};

struct CatalogBounds {
  Interval alpha{-10.0, 10.0};
  Interval beta{-10.0, 10.0};
};

// d = 1 model with S(x, alpha) = exp(sum_k alpha_k f_k(x)), i.e.
// a = exp(0.5 * sum_k alpha_k f_k(x)), and b(x, beta) = sum_k beta_k g_k(x).
// Analytic dS/dalpha and db/dbeta providers are attached.
DiffusionModel make_log_linear_model(const std::vector<Feature>& diffusion, const std::vector<Feature>& drift,
                                     const CatalogBounds& bounds = {}, std::string label = {});

// Builtin families:
//   diff1: a1 cos x + a2 sin x + a3 cos x sin x   diff2: a1 cos x + a2 sin x
//   diff3: a1 cos x + a3 cos x sin x              diff4: a2 sin x + a3 cos x sin x
//   diff5: a1 cos x   diff6: a2 sin x   diff7: a3 cos x sin x
//   drif1: b1 x + b2   drif2: b1 x   drif3: b2   zero: b = 0 (no drift parameter)
// with a = exp(0.5 * (...)).
std::vector<std::string> builtin_diffusion_keys();
std::vector<std::string> builtin_drift_keys();
std::vector<Feature> builtin_diffusion_features(std::string_view key);
std::vector<Feature> builtin_drift_features(std::string_view key);
DiffusionModel make_builtin_model(std::string_view diffusion_key, std::string_view drift_key,
                                  const CatalogBounds& bounds = {});

// Evaluates a named feature function; throws ConfigError for unknown names.
double eval_feature(std::string_view function, double x);

}  // namespace hfdiff
