#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hfdiff/error.hpp"
#include "hfdiff/experiment.hpp"
#include "support.hpp"

using namespace hfdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hfdiff_unit";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

Json study_config(int n, int reps) {
  Json j = Json::parse(R"({
    "model": {"diffusion": "diff4", "drift": "drif2"},
    "alpha0": [2.0, -1.0], "beta0": [-1.0], "x0": [1.0],
    "stepsize": {"kappa": 0.6666666666666666},
    "refine": 1, "seed": 11,
    "estimation": {"modes": ["two-step", "joint"], "model": {"diffusion": "diff1", "drift": "drif1"},
                   "theta0": [0.0, 2.0, -1.0, -1.0, 0.0]},
    "optimizer": {"alpha_start": [-1.0, 1.0], "beta_start": [-2.0, 0.0]}
  })");
  j["n"] = n;
  j["replications"] = reps;
  return j;
}

std::pair<ErrorCode, std::size_t> parse_failure(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_path_csv(in);
  } catch (const Error& e) {
    return {e.code(), e.index().value_or(0)};
  }
  return {ErrorCode::InvalidArgument, 0};
}

}  // namespace

TEST_CASE("path CSV round trip and byte identity") {
  const auto plan = hfdiff::testing::study_plan(1000, 3);
  const auto a = scratch("a.csv");
  const auto b = scratch("b.csv");
  write_path_csv(simulate_path(plan), a);
  write_path_csv(simulate_path(plan), b);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.rfind("j,x1\n", 0) == 0);
  CHECK(line_count(text) == 1002);
  const auto back = read_path_csv(a);
  CHECK(back.values == simulate_path(plan).values);
}

TEST_CASE("malformed CSV rows are reported by line") {
  CHECK(parse_failure("j,x1\n0,1.0\n1,abc\n2,3\n") == std::make_pair(ErrorCode::ParseError, std::size_t{3}));
  CHECK(parse_failure("j,x1\n0,1.0\n1,2.0\n3,3\n") == std::make_pair(ErrorCode::ParseError, std::size_t{4}));
  CHECK(parse_failure("j,x1\n0,1.0\n1,2.0,4.0\n") == std::make_pair(ErrorCode::ParseError, std::size_t{3}));
  CHECK(parse_failure("t,x\n0,1\n1,2\n").first == ErrorCode::ParseError);
  CHECK(parse_failure("j,x1\n0,1.0\n1,nan\n") == std::make_pair(ErrorCode::ParseError, std::size_t{3}));
  std::istringstream ok("j,x1,x2\n0,1,2\n1,3,4\n");
  CHECK(parse_path_csv(ok).dim() == 2);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(ExperimentConfig::from_json(study_config(500, 1)));
  Json bad = study_config(500, 1);
  bad["unexpected"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), Error);
  bad = study_config(500, 1);
  bad["optimizer"]["speed"] = "fast";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), Error);
  bad = study_config(500, 1);
  bad["model"]["diffusion"] = "diff9";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), Error);
  bad = study_config(500, 1);
  bad["alpha0"] = Json::array({1.0});
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), Error);
  for (const char* f : {"table1.json", "selection.json", "simulate.json"})
    CHECK_NOTHROW(ExperimentConfig::from_file(fs::path(HFDIFF_SOURCE_DIR) / "configs" / f));
}

TEST_CASE("zero-noise simulation follows the Euler drift recursion") {
  Json j = study_config(50, 1);
  j["model"]["diffusion_scale"] = 0.0;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto path = simulate_path(cfg.plan(50, 0));
  const double h0 = std::pow(50.0, -2.0 / 3.0);
  double x = 1.0;
  for (int k = 0; k <= 50; ++k) {
    CHECK(path.values(k, 0) == x);
    x += h0 * (-x);
  }
}

TEST_CASE("estimates on simulated truth") {
  const auto cfg = ExperimentConfig::from_json(study_config(5000, 1));
  const auto path = simulate_path(cfg.plan(5000, 0));
  const auto model = cfg.estimation_model();
  const PrecomputedPath lik(path, model);
  const auto ocfg = cfg.optimizer_for(model);
  const FitResult two = fit(lik, FitMode::TwoStep, ocfg);
  const FitResult joint = fit(lik, FitMode::Joint, ocfg);
  for (const FitResult* f : {&two, &joint}) {
    CHECK(f->theta.allFinite());
    CHECK(model.space.contains(f->theta));
    CHECK(f->h_tilde > 0.0);
  }
  for (int k = 3; k < 5; ++k) {
    const double band = std::hypot(two.stderr_theta[k], joint.stderr_theta[k]);
    CHECK(std::abs(two.theta[k] - joint.theta[k]) <= band);
  }
  const Json report = fit_report_json(lik, two, std::nullopt, 0.05, std::nullopt);
  CHECK(report["schema_version"] == kSchemaVersion);
  CHECK(report["h_interval"]["lower"].get<double>() < two.h_tilde);
  CHECK(report["residuals"]["count"] == 5000);
  CHECK(report["parameters"].size() == 5);
}

TEST_CASE("selection CSV layout") {
  const auto path = hfdiff::testing::study_path(1000, 51);
  const auto grid = builtin_grid(builtin_diffusion_keys(), builtin_drift_keys(), hfdiff::testing::study_optimizer());
  const auto rep = select_two_step(path, grid, Criterion::MBIC, 1, false);
  const auto file = scratch("sel.csv");
  write_selection_csv(rep, Criterion::MBIC, file);
  const std::string text = slurp(file);
  CHECK(line_count(text) == 4);
  CHECK(text.rfind("drift,diff1,diff2,diff3,diff4,diff5,diff6,diff7\n", 0) == 0);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == 7);
  const Json j = to_json(rep);
  CHECK(j["schema_version"] == kSchemaVersion);
  CHECK(j["optimizations"] == 10);
}

TEST_CASE("one replication reproduces the single estimate") {
  const auto cfg = ExperimentConfig::from_json(study_config(1000, 1));
  const auto report = run_montecarlo(cfg);
  REQUIRE(report.replications.size() == 1);
  const auto path = simulate_path(cfg.plan(1000, 0));
  const auto model = cfg.estimation_model();
  const PrecomputedPath lik(path, model);
  for (std::size_t m = 0; m < cfg.modes.size(); ++m) {
    const FitResult f = fit(lik, cfg.modes[m], cfg.optimizer_for(model));
    Json single = fit_report_json(lik, f, std::nullopt, cfg.ci_gamma, std::nullopt);
    Json wrapped = report.replications[0].fits[m];
    wrapped.erase("true_h");
    wrapped.erase("standardized");
    wrapped["h_interval"].erase("covers_true_h");
    CHECK(wrapped == single);
  }
}

TEST_CASE("Monte Carlo aggregates match the replication dump") {
  Json j = study_config(800, 6);
  j["threads"] = 2;
  const auto cfg = ExperimentConfig::from_json(j);
  const auto report = run_montecarlo(cfg);
  const Json reps = report.replications_json();
  const Json agg = report.to_json();
  CHECK(agg["replications"] == 6);
  for (std::size_t m = 0; m < cfg.modes.size(); ++m) {
    std::vector<double> h;
    std::vector<double> a2;
    for (const auto& r : reps["replications"]) {
      h.push_back(r["fits"][m]["h"]["estimate"].get<double>() / cfg.stepsize.h0_for(800));
      a2.push_back(r["fits"][m]["parameters"]["alpha2"]["estimate"].get<double>());
    }
    const auto hs = summarize(h);
    const auto as = summarize(a2);
    CHECK(agg["estimation"][m]["h_over_h0"]["mean"].get<double>() == doctest::Approx(hs.mean).epsilon(1e-12));
    CHECK(agg["estimation"][m]["h_over_h0"]["sd"].get<double>() == doctest::Approx(hs.sd).epsilon(1e-12));
    CHECK(agg["estimation"][m]["parameters"]["alpha2"]["mean"].get<double>() == doctest::Approx(as.mean).epsilon(1e-12));
  }
  // thread count does not change results
  j["threads"] = 1;
  CHECK(run_montecarlo(ExperimentConfig::from_json(j)).to_json() == agg);
  // recorded seeds regenerate the paths
  CHECK(reps["replications"][3]["seed"].get<std::uint64_t>() == cfg.path_seed(800, 3));
}

TEST_CASE("histograms count every sample") {
  Histogram h(-1.0, 1.0, 4);
  for (double x : {-2.0, -0.9, -0.1, 0.0, 0.6, 1.0, 3.0}) h.add(x);
  CHECK(h.below == 1);
  CHECK(h.above == 2);
  CHECK(h.counts == std::vector<long long>{1, 1, 1, 1});
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) CHECK(std::stod(format_double(x)) == x);
}
