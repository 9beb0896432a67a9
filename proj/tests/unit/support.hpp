#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hfdiff/catalog.hpp"
#include "hfdiff/estimate.hpp"
#include "hfdiff/simulate.hpp"

namespace hfdiff::testing {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// The simulation-study design: diff4 with alpha = (2, -1), drif2 with beta = -1,
// x0 = 1, h0 = n^(-2/3).
inline SimulationPlan study_plan(int n, std::uint64_t seed, int refine = 1) {
  SimulationPlan p;
  p.model = make_builtin_model("diff4", "drif2");
  p.alpha = Vector::Zero(2);
  p.alpha << 2.0, -1.0;
  p.beta = Vector::Constant(1, -1.0);
  p.n = n;
  p.h0 = stepsize_from_exponent(n, 2.0 / 3.0);
  p.x0 = Vector::Constant(1, 1.0);
  p.refine = refine;
  p.seed = seed;
  return p;
}

inline ObservationPath study_path(int n, std::uint64_t seed) { return simulate_path(study_plan(n, seed)); }

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// d-dimensional model with constant a = scale * I and constant drift c,
// carrying one dummy alpha and one dummy beta coordinate.
inline DiffusionModel constant_model(int d, double scale, const Vector& drift) {
  DiffusionModel m;
  m.label = "constant";
  m.dim = d;
  m.space = ParamSpace({{-1.0, 1.0}}, {{-1.0, 1.0}});
  m.a = [d, scale](const Vector&, const Vector&) { return Matrix(scale * Matrix::Identity(d, d)); };
  m.b = [drift](const Vector&, const Vector&, const Vector&) { return drift; };
  return m;
}

inline ObservationPath path_from_increments(const Matrix& dx, const Vector& x0) {
  ObservationPath p;
  p.values = Matrix::Zero(dx.rows() + 1, dx.cols());
  p.values.row(0) = x0.transpose();
  for (Eigen::Index j = 0; j < dx.rows(); ++j) p.values.row(j + 1) = p.values.row(j) + dx.row(j);
  return p;
}

inline OptimizerConfig study_optimizer(std::uint64_t seed = 11) {
  OptimizerConfig cfg;
  cfg.seed = seed;
  return cfg;
}

// Uniform start intervals alpha ~ U(-1, 1), beta ~ U(-2, 0).
inline OptimizerConfig study_optimizer_for(const DiffusionModel& m, std::uint64_t seed = 11) {
  OptimizerConfig cfg = study_optimizer(seed);
  for (int k = 0; k < m.space.dim(); ++k)
    cfg.init_intervals.push_back(k < m.space.dim_alpha() ? Interval{-1.0, 1.0} : Interval{-2.0, 0.0});
  return cfg;
}

}  // namespace hfdiff::testing
