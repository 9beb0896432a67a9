#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfdiff/model.hpp"

namespace hfdiff {

enum class OptimizerMethod { NelderMead, ProjectedGradient };

const char* to_string(OptimizerMethod m);
OptimizerMethod optimizer_method_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::NelderMead;
  int multistart = 8;
  // Per-coordinate start intervals (alpha then beta); empty means the box.
  std::vector<Interval> init_intervals;
  int max_iters = 5000;
  double f_tol = 1e-10;
  double x_tol = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LocalResult {
  Vector start;
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

struct MultistartResult {
  Vector x;
  double value = 0.0;
  bool converged = false;
  int best_start = -1;
  int evaluations = 0;
  std::vector<LocalResult> starts;
};

// Maximizes f over [lower, upper]. Trial points are projected onto the box.
// Converged when the simplex value spread is below f_tol * max(1, |f|) and
// its diameter below x_tol * max(1, |x|).
LocalResult nelder_mead_max(const ScalarFn& f, const Vector& start, const Vector& lower, const Vector& upper,
                            const Vector& initial_step, int max_iters, double f_tol, double x_tol);

// Projected gradient ascent with Armijo backtracking. `grad` may be empty,
// in which case central differences are used.
LocalResult projected_gradient_max(const ScalarFn& f, const VectorFn& grad, const Vector& start, const Vector& lower,
                                   const Vector& upper, int max_iters, double f_tol, double x_tol);

// Runs cfg.multistart local maximizations from uniform draws over the start
// intervals (`init`, one per coordinate). The first start that attains the
// best value within f_tol wins. Objective evaluations that throw count as
// -infinity. Throws NoConvergence if no start converged.
MultistartResult maximize(const ScalarFn& f, const Vector& lower, const Vector& upper,
                          const std::vector<Interval>& init, const OptimizerConfig& cfg,
                          const VectorFn& grad = {});

}  // namespace hfdiff
