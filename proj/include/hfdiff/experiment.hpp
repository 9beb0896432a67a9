#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hfdiff/io.hpp"

namespace hfdiff {

// A builtin catalog pair, or inline log-linear features.
struct ModelSpec {
  std::string diffusion_key;
  std::string drift_key;
  std::vector<Feature> diffusion_features;
  std::vector<Feature> drift_features;
  double diffusion_scale = 1.0;  // a is multiplied by this; 0 gives a noiseless path
  std::string label;

  DiffusionModel build(const CatalogBounds& bounds) const;
};

// h0 = n^(-kappa), or a fixed h0.
struct StepsizeRule {
  bool fixed = false;
  double kappa = 2.0 / 3.0;
  double h0 = 0.0;

  double h0_for(int n) const;
};

struct SelectionSpec {
  std::vector<std::string> diffusion_keys;
  std::vector<std::string> drift_keys;
  std::vector<Strategy> strategies{Strategy::Joint};
  std::vector<Criterion> criteria{Criterion::MBIC, Criterion::MQBIC};
  std::string true_diffusion;
  std::string true_drift;
};

struct ExperimentConfig {
  ModelSpec model;
  CatalogBounds bounds;
  Vector alpha0;
  Vector beta0;
  double tau = 1.0;
  Vector x0;
  std::vector<int> n_list;
  StepsizeRule stepsize;
  int refine = 10;
  std::uint64_t seed = 1;

  std::vector<FitMode> modes{FitMode::TwoStep};
  std::optional<ModelSpec> fit_model;  // defaults to `model`
  std::optional<Vector> fit_theta0;    // truth in fit-model coordinates
  OptimizerConfig optimizer;
  std::optional<Interval> alpha_start;
  std::optional<Interval> beta_start;
  double ci_gamma = 0.05;

  std::optional<SelectionSpec> selection;

  int replications = 1;
  int histogram_bins = 40;
  double histogram_limit = 5.0;
  unsigned threads = 1;

  // Rejects unknown keys and malformed values with ConfigError.
  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig from_file(const std::filesystem::path& file);
  void validate() const;

  std::uint64_t path_seed(int n, int replication) const;
  SimulationPlan plan(int n, int replication) const;
  DiffusionModel true_model() const;
  DiffusionModel estimation_model() const;
  OptimizerConfig optimizer_for(const DiffusionModel& model) const;
  // True parameter in the estimation model, when known.
  std::optional<Vector> theta0() const;
  CandidateGrid grid() const;
};

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<long long> counts;
  long long below = 0;
  long long above = 0;

  Histogram() = default;
  Histogram(double lo, double hi, int bins) : lo(lo), hi(hi), counts(static_cast<std::size_t>(bins), 0) {}
  void add(double x);
  void merge(const Histogram& other);
};

struct MomentSummary {
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

MomentSummary summarize(const std::vector<double>& xs);

struct ModeSummary {
  FitMode mode = FitMode::TwoStep;
  int n = 0;
  double h0 = 0.0;
  int successes = 0;
  int failures = 0;
  int nonconverged = 0;
  std::vector<std::string> param_names;
  std::vector<MomentSummary> params;
  MomentSummary h_ratio;       // h / h0
  MomentSummary kappa;
  double ci_coverage = 0.0;    // fraction of intervals containing tau h0
  std::vector<MomentSummary> u_alpha;
  std::vector<MomentSummary> u_beta;
  int u_failures = 0;
  std::vector<Histogram> u_alpha_hist;
  std::vector<Histogram> u_beta_hist;
  Histogram residual_hist;
  MomentSummary residuals;
};

struct SelectionSummary {
  Strategy strategy = Strategy::Joint;
  Criterion criterion = Criterion::MBIC;
  int n = 0;
  int successes = 0;
  int failures = 0;
  Matrix counts;        // M2 x M1
  Matrix mean_weights;  // M2 x M1
  double max_weight_sum_error = 0.0;
  int true_hits = 0;
};

struct ReplicationRecord {
  int n = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  std::string error;
  std::vector<Json> fits;        // one per mode, or an error object
  std::vector<Json> selections;  // one per strategy
};

struct MonteCarloReport {
  ExperimentConfig config;
  std::vector<ModeSummary> estimation;
  std::vector<SelectionSummary> selection;
  std::vector<ReplicationRecord> replications;
  std::vector<std::string> diffusion_names;
  std::vector<std::string> drift_names;
  int failed_replications = 0;

  Json to_json() const;
  Json replications_json() const;
};

MonteCarloReport run_montecarlo(const ExperimentConfig& cfg);

// Fit JSON plus the h interval, kappa, residual summary and, when theta0 is
// given, the standardized estimates. Used by both estimate and montecarlo.
Json fit_report_json(const PrecomputedPath& lik, const FitResult& fit, std::optional<double> true_h, double gamma,
                     const std::optional<Vector>& theta0);

// Writes report.json, replications.json, table CSVs and histogram CSVs.
void write_montecarlo_outputs(const MonteCarloReport& report, const std::filesystem::path& dir);

}  // namespace hfdiff
