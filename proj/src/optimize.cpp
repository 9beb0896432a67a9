#include "hfdiff/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "hfdiff/error.hpp"
#include "hfdiff/simulate.hpp"

namespace hfdiff {

const char* to_string(OptimizerMethod m) {
  return m == OptimizerMethod::NelderMead ? "nelder-mead" : "projected-gradient";
}

OptimizerMethod optimizer_method_from_string(const std::string& s) {
  if (s == "nelder-mead") return OptimizerMethod::NelderMead;
  if (s == "projected-gradient") return OptimizerMethod::ProjectedGradient;
  throw Error(ErrorCode::ConfigError, "unknown optimizer method '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (multistart < 1) throw Error(ErrorCode::ConfigError, "multistart must be at least 1");
  if (!(f_tol > 0.0) || !(x_tol > 0.0)) throw Error(ErrorCode::ConfigError, "tolerances must be positive");
  if (max_iters < 1) throw Error(ErrorCode::ConfigError, "max_iters must be positive");
  for (const auto& iv : init_intervals)
    if (!(iv.lo <= iv.hi)) throw Error(ErrorCode::ConfigError, "start interval is empty");
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_eval(const ScalarFn& f, const Vector& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kNegInf;
  } catch (const Error&) {
    return kNegInf;
  }
}

Vector clamp(const Vector& x, const Vector& lo, const Vector& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

}  // namespace

LocalResult nelder_mead_max(const ScalarFn& f, const Vector& start, const Vector& lower, const Vector& upper,
                            const Vector& initial_step, int max_iters, double f_tol, double x_tol) {
  const Eigen::Index k = start.size();
  LocalResult out;
  out.start = start;
  if (k == 0) {
    out.x = start;
    out.value = safe_eval(f, start);
    out.evaluations = 1;
    out.converged = std::isfinite(out.value);
    return out;
  }

  std::vector<Vector> pts;
  std::vector<double> vals;
  auto eval = [&](const Vector& x) {
    ++out.evaluations;
    return safe_eval(f, x);
  };

  const Vector x0 = clamp(start, lower, upper);
  pts.push_back(x0);
  vals.push_back(eval(x0));
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector x = x0;
    x[i] += initial_step[i];
    if (x[i] > upper[i]) x[i] = x0[i] - initial_step[i];
    x = clamp(x, lower, upper);
    pts.push_back(x);
    vals.push_back(eval(x));
  }

  std::vector<std::size_t> order(pts.size());
  for (int it = 0; it < max_iters; ++it) {
    out.iterations = it + 1;
    // Descending by value: order[0] is the best vertex.
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    if (std::isfinite(vals[best])) {
      const double spread = vals[best] - vals[worst];
      double diameter = 0.0;
      for (const auto& p : pts) diameter = std::max(diameter, (p - pts[best]).cwiseAbs().maxCoeff());
      const double fscale = std::max(1.0, std::abs(vals[best]));
      const double xscale = std::max(1.0, pts[best].cwiseAbs().maxCoeff());
      if (spread <= f_tol * fscale && diameter <= x_tol * xscale) {
        out.converged = true;
        break;
      }
    }

    Vector centroid = Vector::Zero(k);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += pts[order[i]];
    centroid /= static_cast<double>(k);

    const Vector xr = clamp(centroid + (centroid - pts[worst]), lower, upper);
    const double fr = eval(xr);
    if (fr > vals[best]) {
      const Vector xe = clamp(centroid + 2.0 * (centroid - pts[worst]), lower, upper);
      const double fe = eval(xe);
      if (fe > fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr > vals[second_worst]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr > vals[worst];
    const Vector xc = outside ? Vector(clamp(centroid + 0.5 * (xr - centroid), lower, upper))
                              : Vector(clamp(centroid + 0.5 * (pts[worst] - centroid), lower, upper));
    const double fc = eval(xc);
    if (fc > (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 1; i < order.size(); ++i) {
      const std::size_t idx = order[i];
      pts[idx] = pts[best] + 0.5 * (pts[idx] - pts[best]);
      vals[idx] = eval(pts[idx]);
    }
  }

  const auto best_it = std::max_element(vals.begin(), vals.end());
  const auto best_idx = static_cast<std::size_t>(std::distance(vals.begin(), best_it));
  out.x = pts[best_idx];
  out.value = vals[best_idx];
  if (!std::isfinite(out.value)) out.converged = false;
  return out;
}

LocalResult projected_gradient_max(const ScalarFn& f, const VectorFn& grad, const Vector& start, const Vector& lower,
                                   const Vector& upper, int max_iters, double f_tol, double x_tol) {
  LocalResult out;
  out.start = start;
  Vector x = clamp(start, lower, upper);
  double fx = safe_eval(f, x);
  ++out.evaluations;
  double step = 1.0;
  for (int it = 0; it < max_iters && std::isfinite(fx); ++it) {
    out.iterations = it + 1;
    Vector g;
    try {
      g = grad ? grad(x) : numeric_gradient(f, x, StencilBox{lower, upper});
    } catch (const Error&) {
      break;
    }
    const double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if ((clamp(x + g, lower, upper) - x).cwiseAbs().maxCoeff() <= x_tol * xscale) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    step = std::min(1.0, 2.0 * step);
    const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx));
    for (int ls = 0; ls < 60; ++ls) {
      const Vector xn = clamp(x + step * g, lower, upper);
      const double fn = safe_eval(f, xn);
      ++out.evaluations;
      bool ascent = fn >= fx + 1e-4 * g.dot(xn - x);
      // Values equal to rounding: decide on the slope at the trial point.
      if (std::abs(fn - fx) <= noise && xn != x) {
        ascent = false;
        try {
          const Vector gn = grad ? grad(xn) : numeric_gradient(f, xn, StencilBox{lower, upper});
          ascent = gn.dot(xn - x) > 0.0;
        } catch (const Error&) {
        }
      }
      if (ascent) {
        const double change = fn - fx;
        const double move = (xn - x).cwiseAbs().maxCoeff();
        x = xn;
        fx = fn;
        accepted = true;
        if (change <= f_tol * std::max(1.0, std::abs(fx)) && move <= x_tol * xscale) out.converged = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || out.converged) {
      out.converged = out.converged || !accepted;
      break;
    }
  }
  out.x = x;
  out.value = fx;
  if (!std::isfinite(fx)) out.converged = false;
  return out;
}

MultistartResult maximize(const ScalarFn& f, const Vector& lower, const Vector& upper,
                          const std::vector<Interval>& init, const OptimizerConfig& cfg, const VectorFn& grad) {
  cfg.validate();
  const Eigen::Index k = lower.size();
  if (static_cast<Eigen::Index>(init.size()) != k)
    throw Error(ErrorCode::InvalidArgument, "start intervals do not match the search dimension");

  MultistartResult res;
  res.value = kNegInf;
  Vector step(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double w = init[static_cast<std::size_t>(i)].hi - init[static_cast<std::size_t>(i)].lo;
    step[i] = std::max(0.25 * w, 1e-3 * (upper[i] - lower[i]));
  }

  for (int s = 0; s < cfg.multistart; ++s) {
    boost::random::mt19937_64 gen(derive_seed(cfg.seed, static_cast<std::uint64_t>(s)));
    Vector x0(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& iv = init[static_cast<std::size_t>(i)];
      boost::random::uniform_real_distribution<double> u(iv.lo, iv.hi);
      x0[i] = iv.lo == iv.hi ? iv.lo : u(gen);
    }
    LocalResult r = cfg.method == OptimizerMethod::NelderMead
                        ? nelder_mead_max(f, x0, lower, upper, step, cfg.max_iters, cfg.f_tol, cfg.x_tol)
                        : projected_gradient_max(f, grad, x0, lower, upper, cfg.max_iters, cfg.f_tol, cfg.x_tol);
    res.evaluations += r.evaluations;
    res.starts.push_back(std::move(r));
  }

  // Best value over converged starts, then the first start within f_tol of it.
  double best = kNegInf;
  for (const auto& r : res.starts)
    if (r.converged) best = std::max(best, r.value);
  if (!std::isfinite(best)) throw Error(ErrorCode::NoConvergence, "no optimizer start converged");
  const double tie = cfg.f_tol * std::max(1.0, std::abs(best));
  for (std::size_t s = 0; s < res.starts.size(); ++s) {
    const auto& r = res.starts[s];
    if (r.converged && r.value >= best - tie) {
      res.best_start = static_cast<int>(s);
      res.x = r.x;
      res.value = r.value;
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace hfdiff
