#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "hfdiff/error.hpp"
#include "hfdiff/experiment.hpp"

namespace fs = std::filesystem;
using namespace hfdiff;

namespace {

struct Options {
  std::string config;
  std::string data;
  std::string out = ".";
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = ExperimentConfig::from_file(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads > 0) cfg.threads = o.threads;
  return cfg;
}

int cmd_simulate(const Options& o) {
  const auto cfg = load(o);
  if (cfg.n_list.size() != 1) throw Error(ErrorCode::ConfigError, "simulate needs exactly one sample size");
  const auto path = simulate_path(cfg.plan(cfg.n_list.front(), 0));
  write_path_csv(path, fs::path(o.out) / "path.csv");
  write_json(to_json(*path.meta), fs::path(o.out) / "path.json");
  std::cout << (fs::path(o.out) / "path.csv").string() << "\n";
  return 0;
}

int cmd_estimate(const Options& o) {
  const auto cfg = load(o);
  const auto path = read_path_csv(o.data);
  const DiffusionModel model = cfg.estimation_model();
  if (path.dim() != model.dim) throw Error(ErrorCode::ParseError, "data dimension does not match the model");
  const PrecomputedPath lik(path, model);
  const auto ocfg = cfg.optimizer_for(model);
  Json fits = Json::array();
  for (FitMode mode : cfg.modes) {
    const FitResult f = fit(lik, mode, ocfg);
    fits.push_back(fit_report_json(lik, f, std::nullopt, cfg.ci_gamma, std::nullopt));
  }
  const Json out = fits.size() == 1 ? fits.front() : Json{{"schema_version", kSchemaVersion}, {"fits", fits}};
  write_json(out, fs::path(o.out) / "fit.json");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_select(const Options& o) {
  const auto cfg = load(o);
  if (!cfg.selection) throw Error(ErrorCode::ConfigError, "select needs a 'selection' block");
  const auto path = read_path_csv(o.data);
  const auto grid = cfg.grid();
  const auto& sel = *cfg.selection;
  const bool both = sel.criteria.size() > 1;
  for (Strategy st : sel.strategies) {
    const auto rep = st == Strategy::Joint ? select_joint(path, grid, sel.criteria.front(), cfg.threads, both)
                                           : select_two_step(path, grid, sel.criteria.front(), cfg.threads, both);
    const std::string tag = to_string(st);
    write_json(to_json(rep), fs::path(o.out) / ("selection_" + tag + ".json"));
    for (const auto& t : rep.tables) {
      write_selection_csv(rep, t.criterion, fs::path(o.out) / ("selection_" + tag + "_" + to_string(t.criterion) + ".csv"));
      std::cout << tag << " " << to_string(t.criterion) << ": "
                << (t.m1 >= 0 ? rep.diffusion_names[static_cast<std::size_t>(t.m1)] : "-") << "/"
                << (t.m2 >= 0 ? rep.drift_names[static_cast<std::size_t>(t.m2)] : "-") << "\n";
    }
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  }
  return 0;
}

int cmd_montecarlo(const Options& o) {
  const auto cfg = load(o);
  const auto report = run_montecarlo(cfg);
  write_montecarlo_outputs(report, o.out);
  for (const auto& s : report.estimation) {
    std::cout << "n=" << s.n << " " << to_string(s.mode) << " (" << s.successes << " ok, " << s.failures
              << " failed)\n";
    for (std::size_t k = 0; k < s.param_names.size(); ++k)
      std::cout << "  " << s.param_names[k] << "  mean " << s.params[k].mean << "  sd " << s.params[k].sd << "\n";
    std::cout << "  h/h0  mean " << s.h_ratio.mean << "  sd " << s.h_ratio.sd << "\n";
  }
  for (const auto& s : report.selection)
    std::cout << "n=" << s.n << " " << to_string(s.strategy) << " " << to_string(s.criterion)
              << ": true model selected " << s.true_hits << "/" << s.successes << "\n";
  if (report.failed_replications > 0)
    std::cerr << report.failed_replications << " replications failed and were excluded\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation and model selection for diffusions sampled at an unknown high frequency"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    if (needs_data) sub->add_option("--data", o.data, "path CSV with header j,x1..xd")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads (0 = config or hardware)");
    sub->add_option("--seed", o.seed, "override the config seed");
  };
  auto* sim = app.add_subcommand("simulate", "simulate one path");
  auto* est = app.add_subcommand("estimate", "fit the estimation model to a path");
  auto* sel = app.add_subcommand("select", "run model selection on a path");
  auto* mc = app.add_subcommand("montecarlo", "run a Monte Carlo experiment");
  add_common(sim, false);
  add_common(est, true);
  add_common(sel, true);
  add_common(mc, false);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(o);
    if (*est) return cmd_estimate(o);
    if (*sel) return cmd_select(o);
    if (*mc) return cmd_montecarlo(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
