#include "hfdiff/simulate.hpp"

#include <cmath>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "hfdiff/error.hpp"

namespace hfdiff {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed ^ (index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix dw_increments(std::uint64_t seed, int n, int d, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "increment variance must be positive");
  if (n < 0 || d < 1) throw Error(ErrorCode::InvalidArgument, "bad increment shape");
  boost::random::mt19937_64 gen(seed);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  const double scale = std::sqrt(h);
  Matrix dw(n, d);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) dw(j, i) = scale * normal(gen);
  return dw;
}

double stepsize_from_exponent(int n, double kappa) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be positive");
  return std::pow(static_cast<double>(n), -kappa);
}

void SimulationPlan::validate() const {
  model.validate();
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  if (!(h0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "h0 must be positive");
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be positive");
  if (refine < 1) throw Error(ErrorCode::InvalidArgument, "refine must be at least 1");
  if (x0.size() != model.dim) throw Error(ErrorCode::InvalidArgument, "x0 has wrong dimension");
  if (alpha.size() != model.space.dim_alpha() || beta.size() != model.space.dim_beta())
    throw Error(ErrorCode::InvalidArgument, "true parameter has wrong dimension");
}

Matrix ObservationPath::increments() const {
  const Eigen::Index rows = values.rows() > 0 ? values.rows() - 1 : 0;
  return values.bottomRows(rows) - values.topRows(rows);
}

void ObservationPath::validate() const {
  if (values.rows() < 2 || values.cols() < 1)
    throw Error(ErrorCode::InvalidArgument, "path needs at least two observations");
  for (Eigen::Index j = 0; j < values.rows(); ++j)
    if (!values.row(j).allFinite()) throw Error(ErrorCode::NonFinite, "non-finite observation", j);
}

ObservationPath simulate_path(const SimulationPlan& plan) {
  plan.validate();
  const int d = plan.model.dim;
  const double dt = plan.tau * plan.h0 / plan.refine;
  const double sqrt_dt = std::sqrt(dt);

  boost::random::mt19937_64 gen(plan.seed);
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  ObservationPath path;
  path.values.resize(plan.n + 1, d);
  Vector x = plan.x0;
  Vector z(d);
  path.values.row(0) = x.transpose();
  for (int j = 1; j <= plan.n; ++j) {
    for (int r = 0; r < plan.refine; ++r) {
      for (int i = 0; i < d; ++i) z[i] = normal(gen);
      const Matrix a = plan.model.a(x, plan.alpha);
      const Vector b = plan.model.b(x, plan.alpha, plan.beta);
      x += sqrt_dt * (a * z) + dt * b;
      if (!x.allFinite() || x.cwiseAbs().maxCoeff() > plan.explosion_cap)
        throw Error(ErrorCode::PathExplosion, "simulated state exceeded the explosion cap", static_cast<std::size_t>(j));
    }
    path.values.row(j) = x.transpose();
  }

  path.meta = PathProvenance{plan.model.label, plan.alpha, plan.beta, plan.tau, plan.h0,
                             plan.n, plan.refine, plan.seed, plan.x0};
  return path;
}

}  // namespace hfdiff
