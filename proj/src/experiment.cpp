#include "hfdiff/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "hfdiff/error.hpp"
#include "hfdiff/parallel.hpp"

namespace hfdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigError, where + ": " + what);
}

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) config_error(where, "unknown key '" + it.key() + "'");
}

template <class T>
T get(const Json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(where, "wrong type");
  }
}

Vector get_vector(const Json& j, const std::string& where) {
  if (j.is_number()) return Vector::Constant(1, get<double>(j, where));
  const auto v = get<std::vector<double>>(j, where);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Interval get_interval(const Json& j, const std::string& where) {
  const auto v = get<std::vector<double>>(j, where);
  if (v.size() != 2 || !(v[0] <= v[1])) config_error(where, "expected [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

std::vector<Feature> get_features(const Json& j, const std::string& where) {
  if (!j.is_array()) config_error(where, "expected an array of features");
  std::vector<Feature> out;
  for (const auto& f : j) {
    check_keys(f, {"name", "function"}, where);
    if (!f.contains("name") || !f.contains("function")) config_error(where, "feature needs name and function");
    out.push_back({get<std::string>(f["name"], where), get<std::string>(f["function"], where)});
    eval_feature(out.back().function, 0.0);
  }
  return out;
}

ModelSpec get_model(const Json& j, const std::string& where) {
  check_keys(j, {"diffusion", "drift", "diffusion_features", "drift_features", "diffusion_scale", "label"}, where);
  ModelSpec m;
  const bool keyed = j.contains("diffusion") || j.contains("drift");
  const bool inline_spec = j.contains("diffusion_features") || j.contains("drift_features");
  if (keyed == inline_spec) config_error(where, "give either diffusion/drift keys or inline features");
  if (keyed) {
    if (!j.contains("diffusion") || !j.contains("drift")) config_error(where, "need both diffusion and drift");
    m.diffusion_key = get<std::string>(j["diffusion"], where + ".diffusion");
    m.drift_key = get<std::string>(j["drift"], where + ".drift");
    builtin_diffusion_features(m.diffusion_key);
    builtin_drift_features(m.drift_key);
  } else {
    if (j.contains("diffusion_features")) m.diffusion_features = get_features(j["diffusion_features"], where);
    if (j.contains("drift_features")) m.drift_features = get_features(j["drift_features"], where);
  }
  if (j.contains("diffusion_scale")) m.diffusion_scale = get<double>(j["diffusion_scale"], where + ".diffusion_scale");
  if (!(m.diffusion_scale >= 0.0)) config_error(where, "diffusion_scale must be nonnegative");
  if (j.contains("label")) m.label = get<std::string>(j["label"], where + ".label");
  return m;
}

Json histogram_json(const Histogram& h) {
  return Json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"below", h.below}, {"above", h.above}};
}

Json moments_json(const MomentSummary& m) { return Json{{"count", m.count}, {"mean", m.mean}, {"sd", m.sd}}; }

}  // namespace

DiffusionModel ModelSpec::build(const CatalogBounds& bounds) const {
  DiffusionModel m = diffusion_key.empty()
                         ? make_log_linear_model(diffusion_features, drift_features, bounds, label)
                         : make_builtin_model(diffusion_key, drift_key, bounds);
  if (!label.empty()) m.label = label;
  if (diffusion_scale != 1.0) {
    const double c = diffusion_scale;
    m.a = [a = m.a, c](const Vector& x, const Vector& alpha) { return Matrix(c * a(x, alpha)); };
    m.dS_dalpha = [dS = *m.dS_dalpha, c](const Vector& x, const Vector& alpha) {
      auto out = dS(x, alpha);
      for (auto& M : out) M *= c * c;
      return out;
    };
    m.log_linear.reset();
  }
  return m;
}

double StepsizeRule::h0_for(int n) const { return fixed ? h0 : stepsize_from_exponent(n, kappa); }

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  check_keys(j, {"schema_version", "model", "bounds", "alpha0", "beta0", "tau", "x0", "n", "stepsize", "refine", "seed",
                 "estimation", "optimizer", "selection", "replications", "threads", "histogram"},
             "config");
  ExperimentConfig c;
  if (j.contains("schema_version") && get<int>(j["schema_version"], "schema_version") != kSchemaVersion)
    config_error("schema_version", "unsupported version");
  if (!j.contains("model")) config_error("config", "missing 'model'");
  c.model = get_model(j["model"], "model");
  if (j.contains("bounds")) {
    check_keys(j["bounds"], {"alpha", "beta"}, "bounds");
    if (j["bounds"].contains("alpha")) c.bounds.alpha = get_interval(j["bounds"]["alpha"], "bounds.alpha");
    if (j["bounds"].contains("beta")) c.bounds.beta = get_interval(j["bounds"]["beta"], "bounds.beta");
  }
  c.alpha0 = j.contains("alpha0") ? get_vector(j["alpha0"], "alpha0") : Vector(0);
  c.beta0 = j.contains("beta0") ? get_vector(j["beta0"], "beta0") : Vector(0);
  if (j.contains("tau")) c.tau = get<double>(j["tau"], "tau");
  c.x0 = j.contains("x0") ? get_vector(j["x0"], "x0") : Vector::Zero(1);
  if (j.contains("n")) {
    if (j["n"].is_number())
      c.n_list = {get<int>(j["n"], "n")};
    else
      c.n_list = get<std::vector<int>>(j["n"], "n");
  }
  if (j.contains("stepsize")) {
    const auto& s = j["stepsize"];
    check_keys(s, {"kappa", "h0"}, "stepsize");
    if (s.contains("kappa") == s.contains("h0")) config_error("stepsize", "give exactly one of kappa or h0");
    if (s.contains("h0")) {
      c.stepsize.fixed = true;
      c.stepsize.h0 = get<double>(s["h0"], "stepsize.h0");
    } else {
      c.stepsize.kappa = get<double>(s["kappa"], "stepsize.kappa");
    }
  }
  if (j.contains("refine")) c.refine = get<int>(j["refine"], "refine");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j["seed"], "seed");

  if (j.contains("estimation")) {
    const auto& e = j["estimation"];
    check_keys(e, {"modes", "model", "theta0", "ci_gamma"}, "estimation");
    if (e.contains("modes")) {
      c.modes.clear();
      for (const auto& s : get<std::vector<std::string>>(e["modes"], "estimation.modes"))
        c.modes.push_back(fit_mode_from_string(s));
    }
    if (e.contains("model")) c.fit_model = get_model(e["model"], "estimation.model");
    if (e.contains("theta0")) c.fit_theta0 = get_vector(e["theta0"], "estimation.theta0");
    if (e.contains("ci_gamma")) c.ci_gamma = get<double>(e["ci_gamma"], "estimation.ci_gamma");
  }

  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, {"method", "multistart", "max_iters", "f_tol", "x_tol", "seed", "alpha_start", "beta_start"},
               "optimizer");
    if (o.contains("method"))
      c.optimizer.method = optimizer_method_from_string(get<std::string>(o["method"], "optimizer.method"));
    if (o.contains("multistart")) c.optimizer.multistart = get<int>(o["multistart"], "optimizer.multistart");
    if (o.contains("max_iters")) c.optimizer.max_iters = get<int>(o["max_iters"], "optimizer.max_iters");
    if (o.contains("f_tol")) c.optimizer.f_tol = get<double>(o["f_tol"], "optimizer.f_tol");
    if (o.contains("x_tol")) c.optimizer.x_tol = get<double>(o["x_tol"], "optimizer.x_tol");
    if (o.contains("seed")) c.optimizer.seed = get<std::uint64_t>(o["seed"], "optimizer.seed");
    if (o.contains("alpha_start")) c.alpha_start = get_interval(o["alpha_start"], "optimizer.alpha_start");
    if (o.contains("beta_start")) c.beta_start = get_interval(o["beta_start"], "optimizer.beta_start");
  }

  if (j.contains("selection")) {
    const auto& s = j["selection"];
    check_keys(s, {"diffusion", "drift", "strategies", "criteria", "true_model"}, "selection");
    SelectionSpec sel;
    sel.diffusion_keys = s.contains("diffusion") ? get<std::vector<std::string>>(s["diffusion"], "selection.diffusion")
                                                 : builtin_diffusion_keys();
    sel.drift_keys =
        s.contains("drift") ? get<std::vector<std::string>>(s["drift"], "selection.drift") : builtin_drift_keys();
    if (s.contains("strategies")) {
      sel.strategies.clear();
      for (const auto& x : get<std::vector<std::string>>(s["strategies"], "selection.strategies"))
        sel.strategies.push_back(strategy_from_string(x));
    }
    if (s.contains("criteria")) {
      sel.criteria.clear();
      for (const auto& x : get<std::vector<std::string>>(s["criteria"], "selection.criteria"))
        sel.criteria.push_back(criterion_from_string(x));
    }
    if (s.contains("true_model")) {
      check_keys(s["true_model"], {"diffusion", "drift"}, "selection.true_model");
      sel.true_diffusion = get<std::string>(s["true_model"].value("diffusion", Json("")), "selection.true_model");
      sel.true_drift = get<std::string>(s["true_model"].value("drift", Json("")), "selection.true_model");
    }
    c.selection = sel;
  }

  if (j.contains("replications")) c.replications = get<int>(j["replications"], "replications");
  if (j.contains("threads")) c.threads = get<unsigned>(j["threads"], "threads");
  if (j.contains("histogram")) {
    check_keys(j["histogram"], {"bins", "limit"}, "histogram");
    if (j["histogram"].contains("bins")) c.histogram_bins = get<int>(j["histogram"]["bins"], "histogram.bins");
    if (j["histogram"].contains("limit")) c.histogram_limit = get<double>(j["histogram"]["limit"], "histogram.limit");
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& file) { return from_json(read_json(file)); }

void ExperimentConfig::validate() const {
  const DiffusionModel m = true_model();
  if (alpha0.size() != m.space.dim_alpha() || beta0.size() != m.space.dim_beta())
    config_error("config", "alpha0/beta0 do not match the model dimensions");
  if (x0.size() != m.dim) config_error("x0", "dimension does not match the model");
  if (n_list.empty()) config_error("n", "at least one sample size is required");
  for (int n : n_list)
    if (n < 2) config_error("n", "sample sizes must be at least 2");
  if (!(tau > 0.0)) config_error("tau", "must be positive");
  if (stepsize.fixed ? !(stepsize.h0 > 0.0) : !(stepsize.kappa > 0.0)) config_error("stepsize", "must be positive");
  if (refine < 1) config_error("refine", "must be at least 1");
  if (modes.empty()) config_error("estimation.modes", "at least one mode is required");
  if (!(ci_gamma > 0.0 && ci_gamma < 1.0)) config_error("estimation.ci_gamma", "must lie in (0, 1)");
  const DiffusionModel fm = estimation_model();
  if (fm.dim != m.dim) config_error("estimation.model", "dimension differs from the simulation model");
  if (fit_theta0 && fit_theta0->size() != fm.space.dim())
    config_error("estimation.theta0", "length does not match the estimation model");
  optimizer.validate();
  if (selection) {
    if (selection->diffusion_keys.empty() || selection->drift_keys.empty())
      config_error("selection", "candidate lists must be nonempty");
    if (selection->strategies.empty() || selection->criteria.empty())
      config_error("selection", "need at least one strategy and criterion");
  }
  if (replications < 1) config_error("replications", "must be at least 1");
  if (histogram_bins < 1 || !(histogram_limit > 0.0)) config_error("histogram", "bins and limit must be positive");
}

std::uint64_t ExperimentConfig::path_seed(int n, int replication) const {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(replication));
}

SimulationPlan ExperimentConfig::plan(int n, int replication) const {
  SimulationPlan p;
  p.model = true_model();
  p.alpha = alpha0;
  p.beta = beta0;
  p.tau = tau;
  p.n = n;
  p.h0 = stepsize.h0_for(n);
  p.x0 = x0;
  p.refine = refine;
  p.seed = path_seed(n, replication);
  return p;
}

DiffusionModel ExperimentConfig::true_model() const { return model.build(bounds); }

DiffusionModel ExperimentConfig::estimation_model() const { return fit_model ? fit_model->build(bounds) : true_model(); }

OptimizerConfig ExperimentConfig::optimizer_for(const DiffusionModel& m) const {
  CandidateGrid g;
  g.optimizer = optimizer;
  g.alpha_start = alpha_start;
  g.beta_start = beta_start;
  return g.config_for(m);
}

std::optional<Vector> ExperimentConfig::theta0() const {
  if (fit_theta0) return fit_theta0;
  if (!fit_model) {
    Vector t(alpha0.size() + beta0.size());
    t << alpha0, beta0;
    return t;
  }
  return std::nullopt;
}

CandidateGrid ExperimentConfig::grid() const {
  if (!selection) config_error("selection", "no candidate grid configured");
  return builtin_grid(selection->diffusion_keys, selection->drift_keys, optimizer, bounds, alpha_start, beta_start);
}

void Histogram::add(double x) {
  if (!std::isfinite(x)) return;
  if (x < lo) {
    ++below;
  } else if (x >= hi) {
    ++above;
  } else {
    auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(counts.size()));
    ++counts[std::min(b, counts.size() - 1)];
  }
}

void Histogram::merge(const Histogram& o) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  below += o.below;
  above += o.above;
}

MomentSummary summarize(const std::vector<double>& xs) {
  MomentSummary m;
  m.count = static_cast<int>(xs.size());
  if (xs.empty()) {
    m.mean = m.sd = kNaN;
    return m;
  }
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / m.count;
  double q = 0.0;
  for (double x : xs) q += (x - m.mean) * (x - m.mean);
  m.sd = m.count > 1 ? std::sqrt(q / (m.count - 1)) : kNaN;
  return m;
}

namespace {

struct ModeOutcome {
  std::optional<FitResult> fit;
  std::string error;
  bool covered = false;
  bool has_ci = false;
  double kappa = kNaN;
  std::optional<StandardizedEstimates> u;
  Histogram residual_hist;
  double res_sum = 0.0;
  double res_sumsq = 0.0;
  long long res_count = 0;
  Json json;
};

struct SelectionOutcome {
  std::vector<CriterionTable> tables;
  std::string error;
};

struct RepOutcome {
  std::uint64_t seed = 0;
  std::string error;
  std::vector<ModeOutcome> modes;
  std::vector<SelectionOutcome> selections;
};

}  // namespace

MonteCarloReport run_montecarlo(const ExperimentConfig& cfg) {
  cfg.validate();
  MonteCarloReport report;
  report.config = cfg;
  const DiffusionModel fit_model = cfg.estimation_model();
  const OptimizerConfig fit_cfg = cfg.optimizer_for(fit_model);
  const auto theta0 = cfg.theta0();
  std::optional<CandidateGrid> grid;
  int true_m1 = -1;
  int true_m2 = -1;
  if (cfg.selection) {
    grid = cfg.grid();
    report.diffusion_names = grid->diffusion_names;
    report.drift_names = grid->drift_names;
    const auto& s = *cfg.selection;
    for (int i = 0; i < grid->diffusion_count(); ++i)
      if (s.diffusion_keys[static_cast<std::size_t>(i)] == s.true_diffusion) true_m1 = i;
    for (int i = 0; i < grid->drift_count(); ++i)
      if (s.drift_keys[static_cast<std::size_t>(i)] == s.true_drift) true_m2 = i;
  }
  const double lim = cfg.histogram_limit;
  const int bins = cfg.histogram_bins;

  for (int n : cfg.n_list) {
    const double h0 = cfg.stepsize.h0_for(n);
    std::vector<RepOutcome> reps(static_cast<std::size_t>(cfg.replications));
    parallel_for(reps.size(), cfg.threads, [&](std::size_t r) {
      RepOutcome& out = reps[r];
      const SimulationPlan plan = cfg.plan(n, static_cast<int>(r));
      out.seed = plan.seed;
      ObservationPath path;
      try {
        path = simulate_path(plan);
      } catch (const Error& e) {
        out.error = e.what();
        return;
      }
      const PrecomputedPath lik(path, fit_model);
      for (FitMode mode : cfg.modes) {
        ModeOutcome mo;
        mo.residual_hist = Histogram(-lim, lim, bins);
        try {
          mo.fit = fit(lik, mode, fit_cfg);
          mo.json = fit_report_json(lik, *mo.fit, h0 * cfg.tau, cfg.ci_gamma, theta0);
          const FitResult& f = *mo.fit;
          if (f.cov) {
            const auto ci = ci_for_h(f, cfg.ci_gamma);
            mo.has_ci = true;
            mo.covered = ci.lower <= cfg.tau * h0 && cfg.tau * h0 <= ci.upper;
          }
          mo.kappa = kappa_estimate(f, n).value;
          const Matrix eps = residuals(lik, f);
          for (double e : eps.reshaped()) {
            mo.residual_hist.add(e);
            mo.res_sum += e;
            mo.res_sumsq += e * e;
            ++mo.res_count;
          }
          if (theta0) {
            try {
              mo.u = standardized_estimates(lik, f, *theta0);
            } catch (const Error&) {
            }
          }
        } catch (const Error& e) {
          mo.fit.reset();
          mo.error = e.what();
          mo.json = Json{{"error", e.what()}, {"mode", to_string(mode)}};
        }
        out.modes.push_back(std::move(mo));
      }
      if (grid) {
        for (Strategy st : cfg.selection->strategies) {
          SelectionOutcome so;
          try {
            const bool both = cfg.selection->criteria.size() > 1;
            const Criterion primary = cfg.selection->criteria.front();
            const auto rep = st == Strategy::Joint ? select_joint(path, *grid, primary, 1, both)
                                                   : select_two_step(path, *grid, primary, 1, both);
            so.tables = rep.tables;
          } catch (const Error& e) {
            so.error = e.what();
          }
          out.selections.push_back(std::move(so));
        }
      }
    });

    // Deterministic aggregation in replication order.
    for (std::size_t m = 0; m < cfg.modes.size(); ++m) {
      ModeSummary s;
      s.mode = cfg.modes[m];
      s.n = n;
      s.h0 = h0;
      s.param_names = fit_model.space.alpha_names();
      s.param_names.insert(s.param_names.end(), fit_model.space.beta_names().begin(),
                           fit_model.space.beta_names().end());
      const int p = fit_model.space.dim();
      const int pa = fit_model.space.dim_alpha();
      const int pb = fit_model.space.dim_beta();
      std::vector<std::vector<double>> params(static_cast<std::size_t>(p));
      std::vector<double> ratio, kap;
      std::vector<std::vector<double>> ua(static_cast<std::size_t>(pa)), ub(static_cast<std::size_t>(pb));
      s.u_alpha_hist.assign(static_cast<std::size_t>(pa), Histogram(-lim, lim, bins));
      s.u_beta_hist.assign(static_cast<std::size_t>(pb), Histogram(-lim, lim, bins));
      s.residual_hist = Histogram(-lim, lim, bins);
      int ci_total = 0;
      int ci_hits = 0;
      double rs = 0.0, rq = 0.0;
      long long rc = 0;
      for (const auto& rep : reps) {
        if (!rep.error.empty() || m >= rep.modes.size() || !rep.modes[m].fit) {
          ++s.failures;
          continue;
        }
        const auto& mo = rep.modes[m];
        const auto& f = *mo.fit;
        ++s.successes;
        if (!f.converged) ++s.nonconverged;
        for (int k = 0; k < p; ++k) params[static_cast<std::size_t>(k)].push_back(f.theta[k]);
        ratio.push_back(f.h_tilde / h0);
        kap.push_back(mo.kappa);
        if (mo.has_ci) {
          ++ci_total;
          if (mo.covered) ++ci_hits;
        }
        s.residual_hist.merge(mo.residual_hist);
        rs += mo.res_sum;
        rq += mo.res_sumsq;
        rc += mo.res_count;
        if (mo.u) {
          for (int k = 0; k < pa; ++k) {
            ua[static_cast<std::size_t>(k)].push_back(mo.u->u_alpha[k]);
            s.u_alpha_hist[static_cast<std::size_t>(k)].add(mo.u->u_alpha[k]);
          }
          for (int k = 0; k < pb; ++k) {
            ub[static_cast<std::size_t>(k)].push_back(mo.u->u_beta[k]);
            s.u_beta_hist[static_cast<std::size_t>(k)].add(mo.u->u_beta[k]);
          }
        } else if (theta0) {
          ++s.u_failures;
        }
      }
      for (const auto& v : params) s.params.push_back(summarize(v));
      s.h_ratio = summarize(ratio);
      s.kappa = summarize(kap);
      s.ci_coverage = ci_total > 0 ? double(ci_hits) / ci_total : kNaN;
      for (const auto& v : ua) s.u_alpha.push_back(summarize(v));
      for (const auto& v : ub) s.u_beta.push_back(summarize(v));
      s.residuals.count = static_cast<int>(std::min<long long>(rc, std::numeric_limits<int>::max()));
      s.residuals.mean = rc > 0 ? rs / rc : kNaN;
      s.residuals.sd = rc > 1 ? std::sqrt((rq - rs * rs / rc) / (rc - 1)) : kNaN;
      report.estimation.push_back(std::move(s));
    }

    if (grid) {
      const int M1 = grid->diffusion_count();
      const int M2 = grid->drift_count();
      for (std::size_t si = 0; si < cfg.selection->strategies.size(); ++si) {
        for (Criterion crit : cfg.selection->criteria) {
          SelectionSummary s;
          s.strategy = cfg.selection->strategies[si];
          s.criterion = crit;
          s.n = n;
          s.counts = Matrix::Zero(M2, M1);
          s.mean_weights = Matrix::Zero(M2, M1);
          for (const auto& rep : reps) {
            const CriterionTable* t = nullptr;
            if (rep.error.empty() && si < rep.selections.size())
              for (const auto& tab : rep.selections[si].tables)
                if (tab.criterion == crit && tab.m1 >= 0 && tab.m2 >= 0) t = &tab;
            if (!t) {
              ++s.failures;
              continue;
            }
            ++s.successes;
            s.counts(t->m2, t->m1) += 1.0;
            s.mean_weights += t->weights;
            s.max_weight_sum_error = std::max(s.max_weight_sum_error, std::abs(t->weights.sum() - 100.0));
            if (t->m1 == true_m1 && t->m2 == true_m2) ++s.true_hits;
          }
          if (s.successes > 0) s.mean_weights /= s.successes;
          report.selection.push_back(std::move(s));
        }
      }
    }

    for (std::size_t r = 0; r < reps.size(); ++r) {
      const auto& rep = reps[r];
      ReplicationRecord rec;
      rec.n = n;
      rec.replication = static_cast<int>(r);
      rec.seed = rep.seed;
      rec.error = rep.error;
      if (!rep.error.empty()) ++report.failed_replications;
      for (const auto& mo : rep.modes) rec.fits.push_back(mo.json);
      for (std::size_t si = 0; si < rep.selections.size(); ++si) {
        const auto& so = rep.selections[si];
        Json sj{{"strategy", to_string(cfg.selection->strategies[si])}};
        if (!so.error.empty()) sj["error"] = so.error;
        Json tabs = Json::array();
        for (const auto& t : so.tables)
          tabs.push_back(Json{{"criterion", to_string(t.criterion)},
                              {"m1", t.m1 + 1},
                              {"m2", t.m2 + 1},
                              {"weights", to_json(t.weights)}});
        sj["tables"] = tabs;
        rec.selections.push_back(sj);
      }
      report.replications.push_back(std::move(rec));
    }
  }
  return report;
}

Json fit_report_json(const PrecomputedPath& lik, const FitResult& fit, std::optional<double> true_h, double gamma,
                     const std::optional<Vector>& theta0) {
  Json j = to_json(fit);
  if (fit.cov) {
    const auto ci = ci_for_h(fit, gamma);
    j["h_interval"] = Json{{"level", 1.0 - gamma}, {"lower", ci.lower}, {"upper", ci.upper}};
    if (true_h) j["h_interval"]["covers_true_h"] = ci.lower <= *true_h && *true_h <= ci.upper;
  } else {
    j["h_interval"] = nullptr;
  }
  const auto kap = kappa_estimate(fit, fit.n);
  j["kappa"] = Json{{"estimate", kap.value}, {"stderr", kap.stderr}};
  if (true_h) {
    j["true_h"] = *true_h;
  }
  const Matrix eps = residuals(lik, fit);
  const auto res = summarize(std::vector<double>(eps.data(), eps.data() + eps.size()));
  double skew = 0.0, kurt = 0.0;
  for (double e : eps.reshaped()) {
    const double z = (e - res.mean) / res.sd;
    skew += z * z * z;
    kurt += z * z * z * z;
  }
  j["residuals"] = Json{{"count", res.count},
                        {"mean", res.mean},
                        {"sd", res.sd},
                        {"skewness", skew / res.count},
                        {"kurtosis", kurt / res.count}};
  if (theta0) {
    try {
      const auto u = standardized_estimates(lik, fit, *theta0);
      j["standardized"] = Json{{"theta0", to_json(*theta0)}, {"u_alpha", to_json(u.u_alpha)}, {"u_beta", to_json(u.u_beta)}};
    } catch (const Error& e) {
      j["standardized"] = Json{{"error", e.what()}};
    }
  }
  return j;
}

Json MonteCarloReport::to_json() const {
  Json est = Json::array();
  for (const auto& s : estimation) {
    Json params = Json::object();
    for (std::size_t k = 0; k < s.param_names.size(); ++k) params[s.param_names[k]] = moments_json(s.params[k]);
    Json ua = Json::array(), ub = Json::array();
    for (const auto& m : s.u_alpha) ua.push_back(moments_json(m));
    for (const auto& m : s.u_beta) ub.push_back(moments_json(m));
    Json hist{{"residual", histogram_json(s.residual_hist)}};
    const std::size_t pa = s.u_alpha_hist.size();
    for (std::size_t k = 0; k < pa; ++k) hist["u_" + s.param_names[k]] = histogram_json(s.u_alpha_hist[k]);
    for (std::size_t k = 0; k < s.u_beta_hist.size(); ++k)
      hist["u_" + s.param_names[pa + k]] = histogram_json(s.u_beta_hist[k]);
    est.push_back(Json{{"n", s.n},
                       {"mode", hfdiff::to_string(s.mode)},
                       {"h0", s.h0},
                       {"successes", s.successes},
                       {"failures", s.failures},
                       {"nonconverged", s.nonconverged},
                       {"parameters", params},
                       {"h_over_h0", moments_json(s.h_ratio)},
                       {"kappa", moments_json(s.kappa)},
                       {"h_interval_coverage", s.ci_coverage},
                       {"u_alpha", ua},
                       {"u_beta", ub},
                       {"u_failures", s.u_failures},
                       {"residuals", moments_json(s.residuals)},
                       {"histograms", hist}});
  }
  Json sel = Json::array();
  for (const auto& s : selection)
    sel.push_back(Json{{"n", s.n},
                       {"strategy", hfdiff::to_string(s.strategy)},
                       {"criterion", hfdiff::to_string(s.criterion)},
                       {"successes", s.successes},
                       {"failures", s.failures},
                       {"true_model_hits", s.true_hits},
                       {"counts", hfdiff::to_json(s.counts)},
                       {"mean_weights", hfdiff::to_json(s.mean_weights)},
                       {"max_weight_sum_error", s.max_weight_sum_error}});
  Json seeds = Json::array();
  for (const auto& r : replications) seeds.push_back(Json{{"n", r.n}, {"replication", r.replication}, {"seed", r.seed}});
  return Json{{"schema_version", kSchemaVersion},
              {"replications", config.replications},
              {"n", config.n_list},
              {"seed", config.seed},
              {"failed_replications", failed_replications},
              {"diffusion_candidates", diffusion_names},
              {"drift_candidates", drift_names},
              {"estimation", est},
              {"selection", sel},
              {"seeds", seeds}};
}

Json MonteCarloReport::replications_json() const {
  Json arr = Json::array();
  for (const auto& r : replications) {
    Json j{{"n", r.n}, {"replication", r.replication}, {"seed", r.seed}};
    if (!r.error.empty()) j["error"] = r.error;
    j["fits"] = r.fits;
    j["selections"] = r.selections;
    arr.push_back(j);
  }
  return Json{{"schema_version", kSchemaVersion}, {"replications", arr}};
}

namespace {

void write_histograms(const std::vector<std::pair<std::string, const Histogram*>>& hs,
                      const std::filesystem::path& file) {
  if (hs.empty()) return;
  const auto& first = *hs.front().second;
  const std::size_t bins = first.counts.size();
  std::ofstream out;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  out.open(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  out << "series,bin_lo,bin_hi,count\n";
  for (const auto& [name, h] : hs) {
    const double w = (h->hi - h->lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b)
      out << name << "," << format_double(h->lo + w * b) << "," << format_double(h->lo + w * (b + 1)) << ","
          << h->counts[b] << "\n";
    out << name << ",-inf," << format_double(h->lo) << "," << h->below << "\n";
    out << name << "," << format_double(h->hi) << ",inf," << h->above << "\n";
  }
}

}  // namespace

void write_montecarlo_outputs(const MonteCarloReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json(report.to_json(), dir / "report.json");
  write_json(report.replications_json(), dir / "replications.json");

  {
    std::ofstream out(dir / "estimates.csv", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write estimates.csv");
    out << "n,mode,quantity,mean,sd,count\n";
    for (const auto& s : report.estimation) {
      for (std::size_t k = 0; k < s.param_names.size(); ++k)
        out << s.n << "," << to_string(s.mode) << "," << s.param_names[k] << "," << format_double(s.params[k].mean)
            << "," << format_double(s.params[k].sd) << "," << s.params[k].count << "\n";
      out << s.n << "," << to_string(s.mode) << ",h/h0," << format_double(s.h_ratio.mean) << ","
          << format_double(s.h_ratio.sd) << "," << s.h_ratio.count << "\n";
    }
  }

  for (const auto& s : report.estimation) {
    const std::string tag = std::string(to_string(s.mode)) + "_n" + std::to_string(s.n);
    std::vector<std::pair<std::string, const Histogram*>> hs;
    const std::size_t pa = s.u_alpha_hist.size();
    for (std::size_t k = 0; k < pa; ++k) hs.emplace_back("u_" + s.param_names[k], &s.u_alpha_hist[k]);
    for (std::size_t k = 0; k < s.u_beta_hist.size(); ++k)
      hs.emplace_back("u_" + s.param_names[pa + k], &s.u_beta_hist[k]);
    write_histograms(hs, dir / ("hist_u_" + tag + ".csv"));
    write_histograms({{"residual", &s.residual_hist}}, dir / ("hist_residual_" + tag + ".csv"));
  }

  for (const auto& s : report.selection) {
    const std::string tag = std::string(to_string(s.strategy)) + "_" + to_string(s.criterion) + "_n" +
                            std::to_string(s.n);
    write_matrix_csv(s.mean_weights, report.drift_names, report.diffusion_names, "drift",
                     dir / ("selection_weights_" + tag + ".csv"));
    write_matrix_csv(s.counts, report.drift_names, report.diffusion_names, "drift",
                     dir / ("selection_counts_" + tag + ".csv"));
  }
}

}  // namespace hfdiff
