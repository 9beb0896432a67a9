#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hfdiff/catalog.hpp"
#include "hfdiff/estimate.hpp"

namespace hfdiff {

enum class Criterion { MBIC, MQBIC };
enum class Strategy { Joint, TwoStep };

const char* to_string(Criterion c);
const char* to_string(Strategy s);
Criterion criterion_from_string(const std::string& s);
Strategy strategy_from_string(const std::string& s);

// -2 loglik + p_alpha log n + p_beta log(n h). Throws NonPositiveNh if n h <= 0.
double mbic_value(double loglik, int n, double h, int p_alpha, int p_beta);
double mbic(const PrecomputedPath& lik, const FitResult& fit);
// -2 loglik + log|-d2_alpha mgqlf| + log|-d2_beta mgqlf|; an empty block adds 0.
// Throws NonPDHessian naming the offending block.
double mqbic(const PrecomputedPath& lik, const FitResult& fit);

// log det of a symmetric positive definite matrix (0 for an empty one).
double logdet_pd(const Matrix& A, const char* block);

// exp{-(c - min c)/2} normalized to 100. Non-finite entries get weight 0.
Vector softmin_weights(const Vector& criteria);

struct CandidateGrid {
  std::vector<std::string> diffusion_names;  // m1 = 0..M1-1
  std::vector<std::string> drift_names;      // m2 = 0..M2-1
  std::function<DiffusionModel(int m1, int m2)> make;
  OptimizerConfig optimizer;
  // Start interval for every alpha (beta) coordinate; unset means the box.
  std::optional<Interval> alpha_start;
  std::optional<Interval> beta_start;

  int diffusion_count() const { return static_cast<int>(diffusion_names.size()); }
  int drift_count() const { return static_cast<int>(drift_names.size()); }
  DiffusionModel model(int m1, int m2) const;
  OptimizerConfig config_for(const DiffusionModel& model) const;
  void validate() const;
};

// Built-in catalog keys crossed into a grid.
CandidateGrid builtin_grid(const std::vector<std::string>& diffusion_keys, const std::vector<std::string>& drift_keys,
                           const OptimizerConfig& cfg, const CatalogBounds& bounds = {},
                           std::optional<Interval> alpha_start = Interval{-1.0, 1.0},
                           std::optional<Interval> beta_start = Interval{-2.0, 0.0});

struct CriterionTable {
  Criterion criterion = Criterion::MBIC;
  Matrix values;   // joint: M2 x M1 criterion values (NaN for failed fits)
  Vector stage1;   // two-step: M1 first-stage values
  Vector stage2;   // two-step: M2 second-stage values given the selected m1
  Matrix weights;  // M2 x M1, sums to 100
  int m1 = -1;     // selected diffusion (0-based)
  int m2 = -1;     // selected drift (0-based)
};

struct CandidateFit {
  int m1 = -1;
  int m2 = -1;  // -1 for a first-stage (diffusion only) fit
  std::optional<FitResult> fit;
  std::optional<AlphaStage> alpha_stage;
  std::string error;
};

struct SelectionReport {
  Strategy strategy = Strategy::Joint;
  Criterion primary = Criterion::MBIC;
  int n = 0;
  std::vector<std::string> diffusion_names;
  std::vector<std::string> drift_names;
  std::vector<CriterionTable> tables;  // primary criterion first
  std::vector<CandidateFit> fits;      // in index order
  int optimizations = 0;               // candidate fits performed
  std::vector<std::string> warnings;

  const CriterionTable& table(Criterion c) const;
  const CriterionTable& selected() const { return tables.front(); }
};

// Fits every (m1, m2) with the joint estimator. With both_criteria, the
// report carries mBIC and mQBIC tables; otherwise only `criterion`.
SelectionReport select_joint(const ObservationPath& path, const CandidateGrid& grid, Criterion criterion,
                             unsigned threads = 1, bool both_criteria = true);

// Stage one picks m1 from -2 H1 + p_alpha log n (or log|-d2 H1|), stage two
// picks m2 given m1* from -2 H2 + p_beta log(n h) (or log|-d2_beta H2|).
// Only the primary criterion is evaluated unless both_criteria is set, in
// which case extra second-stage fits run if the criteria disagree on m1*.
SelectionReport select_two_step(const ObservationPath& path, const CandidateGrid& grid, Criterion criterion,
                                unsigned threads = 1, bool both_criteria = true);

struct ConsistencyRow {
  int n = 0;
  int replications = 0;
  int failures = 0;
  int hits = 0;             // replications selecting the true model
  Matrix counts;            // M2 x M1 selection counts
  Matrix mean_weights;      // M2 x M1
  double frequency() const { return replications > failures ? double(hits) / (replications - failures) : 0.0; }
};

// The simulation plan for sample size n and replication r.
using PlanFactory = std::function<SimulationPlan(int n, int replication)>;

std::vector<ConsistencyRow> consistency_experiment(const PlanFactory& plan, const CandidateGrid& grid,
                                                   Strategy strategy, Criterion criterion, int replications,
                                                   const std::vector<int>& n_list, int true_m1, int true_m2,
                                                   unsigned threads = 1);

}  // namespace hfdiff
