#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hfdiff/model.hpp"

namespace hfdiff {

// Counter-style seed derivation: replication k of a run seeded with `seed`
// draws from derive_seed(seed, k). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// n i.i.d. N_d(0, h I) rows. Uses mt19937_64 with the Boost normal
// distribution so sequences are identical across standard libraries.
Matrix dw_increments(std::uint64_t seed, int n, int d, double h);

// h0 = n^(-kappa); the simulation study uses kappa = 2/3.
double stepsize_from_exponent(int n, double kappa);

struct SimulationPlan {
  DiffusionModel model;
  Vector alpha;
  Vector beta;
  double tau = 1.0;
  int n = 0;
  double h0 = 0.0;
  Vector x0;
  int refine = 10;
  std::uint64_t seed = 0;
  double explosion_cap = 1e8;

  // T_n = n h0 should be large and n h0^2 small.
  double horizon() const { return n * h0; }
  double n_h0_squared() const { return n * h0 * h0; }
  void validate() const;
};

// Provenance carried alongside simulated data. Estimators never read it.
struct PathProvenance {
  std::string model_label;
  Vector alpha;
  Vector beta;
  double tau = 1.0;
  double h0 = 0.0;
  int n = 0;
  int refine = 1;
  std::uint64_t seed = 0;
  Vector x0;
};

// Equally spaced observations X_{t_0}, ..., X_{t_n}, one row per time point.
struct ObservationPath {
  Matrix values;
  std::optional<PathProvenance> meta;

  int n() const { return static_cast<int>(values.rows()) - 1; }
  int dim() const { return static_cast<int>(values.cols()); }
  // Row j-1 is Delta_j X = X_{t_j} - X_{t_{j-1}}.
  Matrix increments() const;
  void validate() const;
};

// Euler-Maruyama with `refine` substeps per observation interval; diffusion
// increments scale with sqrt(tau h0 / refine), drift with tau h0 / refine.
// Throws PathExplosion when |X| exceeds the plan's cap.
ObservationPath simulate_path(const SimulationPlan& plan);

}  // namespace hfdiff
