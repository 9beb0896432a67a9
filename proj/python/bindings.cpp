#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hfdiff/error.hpp"
#include "hfdiff/experiment.hpp"

namespace py = pybind11;
using namespace hfdiff;

namespace {

ObservationPath as_path(const Matrix& values) {
  ObservationPath p;
  p.values = values;
  p.validate();
  return p;
}

OptimizerConfig optimizer(int multistart, std::uint64_t seed, const std::string& method) {
  OptimizerConfig cfg;
  cfg.multistart = multistart;
  cfg.seed = seed;
  cfg.method = optimizer_method_from_string(method);
  return cfg;
}

// Owns the model and path so the likelihood can outlive the Python arguments.
class Likelihood {
 public:
  Likelihood(const Matrix& values, const std::string& diffusion, const std::string& drift)
      : path_(as_path(values)), model_(make_builtin_model(diffusion, drift)), lik_(path_, model_) {}

  const PrecomputedPath& get() const { return lik_; }
  const DiffusionModel& model() const { return model_; }

 private:
  ObservationPath path_;
  DiffusionModel model_;
  PrecomputedPath lik_;
};

std::string fit_json(const Likelihood& L, const std::string& mode, int multistart, std::uint64_t seed,
                     const std::string& method, std::optional<std::pair<double, double>> alpha_start,
                     std::optional<std::pair<double, double>> beta_start, double gamma) {
  CandidateGrid g;
  g.optimizer = optimizer(multistart, seed, method);
  if (alpha_start) g.alpha_start = Interval{alpha_start->first, alpha_start->second};
  if (beta_start) g.beta_start = Interval{beta_start->first, beta_start->second};
  FitResult f;
  {
    py::gil_scoped_release release;
    f = fit(L.get(), fit_mode_from_string(mode), g.config_for(L.model()));
  }
  return fit_report_json(L.get(), f, std::nullopt, gamma, std::nullopt).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Estimation and model selection for diffusions sampled at an unknown high frequency";

  static py::exception<Error> exc(m, "HfdiffError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(exc.ptr(), e.what());
    }
  });

  m.def("diffusion_keys", &builtin_diffusion_keys);
  m.def("drift_keys", &builtin_drift_keys);

  m.def(
      "simulate",
      [](const std::string& diffusion, const std::string& drift, const Vector& alpha, const Vector& beta, int n,
         double h0, double tau, const Vector& x0, int refine, std::uint64_t seed) {
        SimulationPlan plan;
        plan.model = make_builtin_model(diffusion, drift);
        plan.alpha = alpha;
        plan.beta = beta;
        plan.tau = tau;
        plan.n = n;
        plan.h0 = h0;
        plan.x0 = x0;
        plan.refine = refine;
        plan.seed = seed;
        py::gil_scoped_release release;
        return simulate_path(plan).values;
      },
      py::arg("diffusion"), py::arg("drift"), py::arg("alpha"), py::arg("beta"), py::arg("n"), py::arg("h0"),
      py::arg("tau") = 1.0, py::arg("x0") = Vector::Ones(1), py::arg("refine") = 10, py::arg("seed") = 0);

  py::class_<Likelihood>(m, "Likelihood")
      .def(py::init<const Matrix&, const std::string&, const std::string&>(), py::arg("values"),
           py::arg("diffusion"), py::arg("drift"))
      .def_property_readonly("n", [](const Likelihood& L) { return L.get().n(); })
      .def_property_readonly("param_names",
                             [](const Likelihood& L) {
                               auto names = L.model().space.alpha_names();
                               const auto& b = L.model().space.beta_names();
                               names.insert(names.end(), b.begin(), b.end());
                               return names;
                             })
      .def("gqlf", [](const Likelihood& L, const Vector& theta, double h) { return L.get().gqlf(theta, h); })
      .def("h_of_alpha", [](const Likelihood& L, const Vector& alpha) { return L.get().h_of_alpha(alpha); })
      .def("h_star", [](const Likelihood& L, const Vector& theta) { return L.get().h_star(theta); })
      .def("mgqlf", [](const Likelihood& L, const Vector& theta) { return L.get().mgqlf(theta); })
      .def("h1", [](const Likelihood& L, const Vector& alpha) { return L.get().h1(alpha); })
      .def("h2", [](const Likelihood& L, const Vector& alpha, const Vector& beta) { return L.get().h2(alpha, beta); })
      .def("_fit_json", &fit_json, py::arg("mode") = "two-step", py::arg("multistart") = 8, py::arg("seed") = 1,
           py::arg("method") = "nelder-mead", py::arg("alpha_start") = py::none(), py::arg("beta_start") = py::none(),
           py::arg("gamma") = 0.05);

  m.def(
      "_select_json",
      [](const Matrix& values, const std::vector<std::string>& diffusion, const std::vector<std::string>& drift,
         const std::string& strategy, const std::string& criterion, int multistart, std::uint64_t seed,
         std::optional<std::pair<double, double>> alpha_start, std::optional<std::pair<double, double>> beta_start) {
        const auto path = as_path(values);
        std::optional<Interval> as, bs;
        if (alpha_start) as = Interval{alpha_start->first, alpha_start->second};
        if (beta_start) bs = Interval{beta_start->first, beta_start->second};
        const auto grid = builtin_grid(diffusion, drift, optimizer(multistart, seed, "nelder-mead"), {}, as, bs);
        SelectionReport rep;
        {
          py::gil_scoped_release release;
          rep = strategy_from_string(strategy) == Strategy::Joint
                    ? select_joint(path, grid, criterion_from_string(criterion))
                    : select_two_step(path, grid, criterion_from_string(criterion));
        }
        return to_json(rep).dump();
      },
      py::arg("values"), py::arg("diffusion"), py::arg("drift"), py::arg("strategy") = "joint",
      py::arg("criterion") = "mBIC", py::arg("multistart") = 8, py::arg("seed") = 1,
      py::arg("alpha_start") = py::none(), py::arg("beta_start") = py::none());

  m.def(
      "_montecarlo_json",
      [](const std::string& config) {
        const auto cfg = ExperimentConfig::from_json(Json::parse(config));
        MonteCarloReport rep;
        {
          py::gil_scoped_release release;
          rep = run_montecarlo(cfg);
        }
        return rep.to_json().dump();
      },
      py::arg("config"));
}
