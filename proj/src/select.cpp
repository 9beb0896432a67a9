#include "hfdiff/select.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "hfdiff/error.hpp"
#include "hfdiff/parallel.hpp"

namespace hfdiff {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

const char* to_string(Criterion c) { return c == Criterion::MBIC ? "mBIC" : "mQBIC"; }
const char* to_string(Strategy s) { return s == Strategy::Joint ? "joint" : "two-step"; }

Criterion criterion_from_string(const std::string& s) {
  if (s == "mBIC" || s == "mbic") return Criterion::MBIC;
  if (s == "mQBIC" || s == "mqbic") return Criterion::MQBIC;
  throw Error(ErrorCode::ConfigError, "unknown criterion '" + s + "'");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "joint") return Strategy::Joint;
  if (s == "two-step") return Strategy::TwoStep;
  throw Error(ErrorCode::ConfigError, "unknown selection strategy '" + s + "'");
}

double mbic_value(double loglik, int n, double h, int p_alpha, int p_beta) {
  const double nh = n * h;
  if (!(nh > 0.0)) throw Error(ErrorCode::NonPositiveNh, "n h must be positive for mBIC");
  double c = -2.0 * loglik + p_alpha * std::log(static_cast<double>(n));
  if (p_beta > 0) c += p_beta * std::log(nh);
  return c;
}

double mbic(const PrecomputedPath& /*lik*/, const FitResult& fit) {
  return mbic_value(fit.loglik, fit.n, fit.h_tilde, fit.p_alpha, fit.p_beta);
}

double logdet_pd(const Matrix& A, const char* block) {
  if (A.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
    throw Error(ErrorCode::NonPDHessian, std::string("negated Hessian is not positive definite in the ") + block +
                                             " block");
  return es.eigenvalues().array().log().sum();
}

double mqbic(const PrecomputedPath& lik, const FitResult& fit) {
  const Matrix Ha = hessian_alpha(lik, Objective::MGQLF, fit.theta);
  const Matrix Hb = hessian_beta(lik, Objective::MGQLF, fit.theta);
  return -2.0 * fit.loglik + logdet_pd(-Ha, "alpha") + logdet_pd(-Hb, "beta");
}

Vector softmin_weights(const Vector& criteria) {
  Vector w = Vector::Zero(criteria.size());
  double best = std::numeric_limits<double>::infinity();
  for (double c : criteria)
    if (std::isfinite(c)) best = std::min(best, c);
  if (!std::isfinite(best)) return w;
  for (Eigen::Index i = 0; i < criteria.size(); ++i)
    if (std::isfinite(criteria[i])) w[i] = std::exp(-0.5 * (criteria[i] - best));
  return 100.0 * w / w.sum();
}

DiffusionModel CandidateGrid::model(int m1, int m2) const {
  if (m1 < 0 || m1 >= diffusion_count() || m2 < 0 || m2 >= drift_count())
    throw Error(ErrorCode::InvalidArgument, "candidate index out of range");
  return make(m1, m2);
}

OptimizerConfig CandidateGrid::config_for(const DiffusionModel& model) const {
  OptimizerConfig cfg = optimizer;
  if (!alpha_start && !beta_start) return cfg;
  cfg.init_intervals = model.space.bounds();
  const int pa = model.space.dim_alpha();
  for (int k = 0; k < model.space.dim(); ++k) {
    const auto& start = k < pa ? alpha_start : beta_start;
    if (start) cfg.init_intervals[static_cast<std::size_t>(k)] = *start;
  }
  return cfg;
}

void CandidateGrid::validate() const {
  if (diffusion_names.empty() || drift_names.empty())
    throw Error(ErrorCode::InvalidArgument, "candidate grid needs at least one diffusion and one drift");
  if (!make) throw Error(ErrorCode::InvalidArgument, "candidate grid has no model factory");
  optimizer.validate();
}

CandidateGrid builtin_grid(const std::vector<std::string>& diffusion_keys, const std::vector<std::string>& drift_keys,
                           const OptimizerConfig& cfg, const CatalogBounds& bounds, std::optional<Interval> alpha_start,
                           std::optional<Interval> beta_start) {
  for (const auto& k : diffusion_keys) builtin_diffusion_features(k);
  for (const auto& k : drift_keys) builtin_drift_features(k);
  CandidateGrid g;
  g.diffusion_names = diffusion_keys;
  g.drift_names = drift_keys;
  g.make = [diffusion_keys, drift_keys, bounds](int m1, int m2) {
    return make_builtin_model(diffusion_keys[static_cast<std::size_t>(m1)], drift_keys[static_cast<std::size_t>(m2)],
                              bounds);
  };
  g.optimizer = cfg;
  g.alpha_start = alpha_start;
  g.beta_start = beta_start;
  return g;
}

const CriterionTable& SelectionReport::table(Criterion c) const {
  for (const auto& t : tables)
    if (t.criterion == c) return t;
  throw Error(ErrorCode::InvalidArgument, std::string("report has no ") + to_string(c) + " table");
}

namespace {

// Index of the smallest finite entry, or -1.
int argmin_finite(const Vector& v) {
  int best = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i]) && (best < 0 || v[i] < v[best])) best = static_cast<int>(i);
  return best;
}

std::string candidate_name(const CandidateGrid& g, int m1, int m2) {
  std::string s = g.diffusion_names[static_cast<std::size_t>(m1)];
  if (m2 >= 0) s += "/" + g.drift_names[static_cast<std::size_t>(m2)];
  return s;
}

std::vector<Criterion> criteria_list(Criterion primary, bool both) {
  std::vector<Criterion> out{primary};
  if (both) out.push_back(primary == Criterion::MBIC ? Criterion::MQBIC : Criterion::MBIC);
  return out;
}

}  // namespace

SelectionReport select_joint(const ObservationPath& path, const CandidateGrid& grid, Criterion criterion,
                             unsigned threads, bool both_criteria) {
  grid.validate();
  const int M1 = grid.diffusion_count();
  const int M2 = grid.drift_count();
  const auto crits = criteria_list(criterion, both_criteria);
  const std::size_t K = static_cast<std::size_t>(M1) * M2;

  std::vector<CandidateFit> fits(K);
  std::vector<std::vector<double>> values(K, std::vector<double>(crits.size(), kNaN));
  std::vector<std::vector<std::string>> notes(K);
  parallel_for(K, threads, [&](std::size_t k) {
    const int m1 = static_cast<int>(k) / M2;
    const int m2 = static_cast<int>(k) % M2;
    auto& cf = fits[k];
    cf.m1 = m1;
    cf.m2 = m2;
    const std::string name = candidate_name(grid, m1, m2);
    try {
      const DiffusionModel model = grid.model(m1, m2);
      const PrecomputedPath lik(path, model);
      cf.fit = fit_joint(lik, grid.config_for(model));
      for (const auto& w : cf.fit->warnings) notes[k].push_back(name + ": " + w);
      for (std::size_t c = 0; c < crits.size(); ++c) {
        try {
          values[k][c] = crits[c] == Criterion::MBIC ? mbic(lik, *cf.fit) : mqbic(lik, *cf.fit);
        } catch (const Error& e) {
          notes[k].push_back(name + ": " + to_string(crits[c]) + " unavailable: " + e.what());
        }
      }
    } catch (const Error& e) {
      cf.error = e.what();
      notes[k].push_back(name + ": fit failed and is excluded: " + e.what());
    }
  });

  SelectionReport rep;
  rep.strategy = Strategy::Joint;
  rep.primary = criterion;
  rep.n = path.n();
  rep.diffusion_names = grid.diffusion_names;
  rep.drift_names = grid.drift_names;
  rep.optimizations = static_cast<int>(K);
  for (const auto& v : notes) rep.warnings.insert(rep.warnings.end(), v.begin(), v.end());
  rep.fits = std::move(fits);

  for (std::size_t c = 0; c < crits.size(); ++c) {
    CriterionTable t;
    t.criterion = crits[c];
    t.values = Matrix::Constant(M2, M1, kNaN);
    Vector flat(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) {
      t.values(static_cast<int>(k) % M2, static_cast<int>(k) / M2) = values[k][c];
      flat[static_cast<Eigen::Index>(k)] = values[k][c];
    }
    const int best = argmin_finite(flat);
    if (best < 0) {
      if (c == 0) throw Error(ErrorCode::AllCandidatesFailed, "no candidate produced a finite criterion");
      rep.warnings.push_back(std::string("no candidate produced a finite ") + to_string(crits[c]));
    }
    const Vector w = softmin_weights(flat);
    t.weights = Matrix::Zero(M2, M1);
    for (std::size_t k = 0; k < K; ++k) t.weights(static_cast<int>(k) % M2, static_cast<int>(k) / M2) = w[k];
    if (best >= 0) {
      t.m1 = best / M2;
      t.m2 = best % M2;
    }
    rep.tables.push_back(std::move(t));
  }
  return rep;
}

SelectionReport select_two_step(const ObservationPath& path, const CandidateGrid& grid, Criterion criterion,
                                unsigned threads, bool both_criteria) {
  grid.validate();
  const int M1 = grid.diffusion_count();
  const int M2 = grid.drift_count();
  const auto crits = criteria_list(criterion, both_criteria);
  const int n = path.n();

  SelectionReport rep;
  rep.strategy = Strategy::TwoStep;
  rep.primary = criterion;
  rep.n = n;
  rep.diffusion_names = grid.diffusion_names;
  rep.drift_names = grid.drift_names;

  // Stage one: diffusion candidates.
  std::vector<CandidateFit> stage1(static_cast<std::size_t>(M1));
  std::vector<std::vector<double>> s1(static_cast<std::size_t>(M1), std::vector<double>(crits.size(), kNaN));
  std::vector<std::vector<std::string>> notes1(static_cast<std::size_t>(M1));
  parallel_for(static_cast<std::size_t>(M1), threads, [&](std::size_t i) {
    const int m1 = static_cast<int>(i);
    auto& cf = stage1[i];
    cf.m1 = m1;
    const std::string name = candidate_name(grid, m1, -1);
    try {
      const DiffusionModel model = grid.model(m1, 0);
      const PrecomputedPath lik(path, model);
      cf.alpha_stage = fit_alpha_stage(lik, grid.config_for(model));
      const auto& st = *cf.alpha_stage;
      if (!st.converged) notes1[i].push_back(name + ": first-stage optimizer did not converge");
      const double H1 = lik.mgqlf_constant() + st.h1;
      const int pa = model.space.dim_alpha();
      for (std::size_t c = 0; c < crits.size(); ++c) {
        try {
          if (crits[c] == Criterion::MBIC) {
            s1[i][c] = -2.0 * H1 + pa * std::log(static_cast<double>(n));
          } else {
            const Vector theta = model.space.join(st.alpha, Vector::Zero(model.space.dim_beta()));
            s1[i][c] = -2.0 * H1 + logdet_pd(-hessian_alpha(lik, Objective::H1, theta), "alpha");
          }
        } catch (const Error& e) {
          notes1[i].push_back(name + ": " + to_string(crits[c]) + " unavailable: " + e.what());
        }
      }
    } catch (const Error& e) {
      cf.error = e.what();
      notes1[i].push_back(name + ": first-stage fit failed and is excluded: " + e.what());
    }
  });
  rep.optimizations = M1;
  for (const auto& v : notes1) rep.warnings.insert(rep.warnings.end(), v.begin(), v.end());

  // Stage two, once per distinct selected diffusion.
  struct Stage2 {
    std::vector<CandidateFit> fits;
    std::vector<std::vector<double>> values;  // [m2][criterion]
  };
  std::map<int, Stage2> second;
  auto run_stage2 = [&](int m1) {
    Stage2 out;
    out.fits.resize(static_cast<std::size_t>(M2));
    out.values.assign(static_cast<std::size_t>(M2), std::vector<double>(crits.size(), kNaN));
    std::vector<std::vector<std::string>> notes(static_cast<std::size_t>(M2));
    const AlphaStage& st = *stage1[static_cast<std::size_t>(m1)].alpha_stage;
    parallel_for(static_cast<std::size_t>(M2), threads, [&](std::size_t j) {
      const int m2 = static_cast<int>(j);
      auto& cf = out.fits[j];
      cf.m1 = m1;
      cf.m2 = m2;
      const std::string name = candidate_name(grid, m1, m2);
      try {
        const DiffusionModel model = grid.model(m1, m2);
        const PrecomputedPath lik(path, model);
        cf.fit = fit_two_step_given_alpha(lik, st, grid.config_for(model));
        const auto& f = *cf.fit;
        for (const auto& w : f.warnings) notes[j].push_back(name + ": " + w);
        for (std::size_t c = 0; c < crits.size(); ++c) {
          try {
            if (crits[c] == Criterion::MBIC)
              out.values[j][c] = mbic_value(f.h2, n, f.h_tilde, 0, f.p_beta);
            else
              out.values[j][c] = -2.0 * f.h2 + logdet_pd(-hessian_beta(lik, Objective::H2, f.theta), "beta");
          } catch (const Error& e) {
            notes[j].push_back(name + ": " + to_string(crits[c]) + " unavailable: " + e.what());
          }
        }
      } catch (const Error& e) {
        cf.error = e.what();
        notes[j].push_back(name + ": second-stage fit failed and is excluded: " + e.what());
      }
    });
    for (const auto& v : notes) rep.warnings.insert(rep.warnings.end(), v.begin(), v.end());
    rep.optimizations += M2;
    return out;
  };

  for (auto& cf : stage1) rep.fits.push_back(cf);
  for (std::size_t c = 0; c < crits.size(); ++c) {
    CriterionTable t;
    t.criterion = crits[c];
    t.stage1 = Vector(M1);
    for (int m1 = 0; m1 < M1; ++m1) t.stage1[m1] = s1[static_cast<std::size_t>(m1)][c];
    t.m1 = argmin_finite(t.stage1);
    t.weights = Matrix::Zero(M2, M1);
    t.stage2 = Vector::Constant(M2, kNaN);
    if (t.m1 < 0) {
      if (c == 0) throw Error(ErrorCode::AllCandidatesFailed, "no diffusion candidate produced a finite criterion");
      rep.warnings.push_back(std::string("no diffusion candidate produced a finite ") + to_string(crits[c]));
      rep.tables.push_back(std::move(t));
      continue;
    }
    auto it = second.find(t.m1);
    if (it == second.end()) {
      it = second.emplace(t.m1, run_stage2(t.m1)).first;
      for (const auto& cf : it->second.fits) rep.fits.push_back(cf);
    }
    for (int m2 = 0; m2 < M2; ++m2) t.stage2[m2] = it->second.values[static_cast<std::size_t>(m2)][c];
    t.m2 = argmin_finite(t.stage2);
    if (t.m2 < 0) {
      if (c == 0) throw Error(ErrorCode::AllCandidatesFailed, "no drift candidate produced a finite criterion");
      rep.warnings.push_back(std::string("no drift candidate produced a finite ") + to_string(crits[c]));
    }
    const Vector w1 = softmin_weights(t.stage1) / 100.0;
    const Vector w2 = softmin_weights(t.stage2) / 100.0;
    t.weights = 100.0 * w2 * w1.transpose();
    rep.tables.push_back(std::move(t));
  }
  return rep;
}

std::vector<ConsistencyRow> consistency_experiment(const PlanFactory& plan, const CandidateGrid& grid,
                                                   Strategy strategy, Criterion criterion, int replications,
                                                   const std::vector<int>& n_list, int true_m1, int true_m2,
                                                   unsigned threads) {
  grid.validate();
  if (replications < 1) throw Error(ErrorCode::InvalidArgument, "replications must be positive");
  const int M1 = grid.diffusion_count();
  const int M2 = grid.drift_count();
  std::vector<ConsistencyRow> rows;
  for (int n : n_list) {
    std::vector<std::optional<CriterionTable>> picks(static_cast<std::size_t>(replications));
    parallel_for(picks.size(), threads, [&](std::size_t r) {
      try {
        const auto path = simulate_path(plan(n, static_cast<int>(r)));
        const auto rep = strategy == Strategy::Joint ? select_joint(path, grid, criterion, 1, false)
                                                     : select_two_step(path, grid, criterion, 1, false);
        picks[r] = rep.selected();
      } catch (const Error&) {
      }
    });
    ConsistencyRow row;
    row.n = n;
    row.replications = replications;
    row.counts = Matrix::Zero(M2, M1);
    row.mean_weights = Matrix::Zero(M2, M1);
    for (const auto& p : picks) {
      if (!p) {
        ++row.failures;
        continue;
      }
      row.counts(p->m2, p->m1) += 1.0;
      row.mean_weights += p->weights;
      if (p->m1 == true_m1 && p->m2 == true_m2) ++row.hits;
    }
    if (replications > row.failures) row.mean_weights /= replications - row.failures;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hfdiff
