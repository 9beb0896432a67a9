#include "hfdiff/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hfdiff/error.hpp"

namespace hfdiff {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, std::size_t line) {
  const std::string s = trim(cell);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "row " + std::to_string(line) + ": '" + s + "' is not a finite number", line);
  return v;
}

}  // namespace

void write_path_csv(const ObservationPath& path, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << "j";
  for (int i = 1; i <= path.dim(); ++i) out << ",x" << i;
  out << "\n";
  for (Eigen::Index j = 0; j < path.values.rows(); ++j) {
    out << j;
    for (Eigen::Index i = 0; i < path.values.cols(); ++i) out << "," << format_double(path.values(j, i));
    out << "\n";
  }
}

ObservationPath parse_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "row 1: missing header", 1);
  const auto header = split(trim(line));
  if (header.size() < 2 || trim(header[0]) != "j")
    throw Error(ErrorCode::ParseError, "row 1: header must be j,x1..xd", 1);
  const std::size_t d = header.size() - 1;
  for (std::size_t i = 1; i <= d; ++i)
    if (trim(header[i]) != "x" + std::to_string(i))
      throw Error(ErrorCode::ParseError, "row 1: expected column x" + std::to_string(i), 1);

  std::vector<double> data;
  std::size_t lineno = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != d + 1)
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " fields", lineno);
    const double j = parse_number(cells[0], lineno);
    if (j != static_cast<double>(rows))
      throw Error(ErrorCode::ParseError, "row " + std::to_string(lineno) + ": index j out of sequence", lineno);
    for (std::size_t i = 1; i <= d; ++i) data.push_back(parse_number(cells[i], lineno));
    ++rows;
  }
  if (rows < 2) throw Error(ErrorCode::ParseError, "need at least two observations", lineno);
  ObservationPath path;
  path.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  return path;
}

ObservationPath read_path_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
  return parse_path_csv(in);
}

Json to_json(const Vector& v) {
  Json j = Json::array();
  for (double x : v) j.push_back(x);
  return j;
}

Json to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vector(m.row(r).transpose())));
  return j;
}

Json to_json(const PathProvenance& p) {
  return Json{{"schema_version", kSchemaVersion},
              {"model", p.model_label},
              {"alpha", to_json(p.alpha)},
              {"beta", to_json(p.beta)},
              {"tau", p.tau},
              {"h0", p.h0},
              {"n", p.n},
              {"refine", p.refine},
              {"seed", p.seed},
              {"x0", to_json(p.x0)}};
}

Json to_json(const FitResult& fit) {
  Json params = Json::object();
  for (std::size_t k = 0; k < fit.param_names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    params[fit.param_names[k]] = Json{{"estimate", fit.theta[i]}, {"stderr", fit.stderr_theta[i]}};
  }
  Json j{{"schema_version", kSchemaVersion},
         {"mode", to_string(fit.mode)},
         {"model", fit.model_label},
         {"n", fit.n},
         {"d", fit.d},
         {"p_alpha", fit.p_alpha},
         {"p_beta", fit.p_beta},
         {"parameters", params},
         {"theta", to_json(fit.theta)},
         {"h", Json{{"estimate", fit.h_tilde}, {"stderr", fit.stderr_h}}},
         {"mgqlf", fit.loglik},
         {"h1", fit.h1},
         {"h2", fit.h2},
         {"converged", fit.converged},
         {"at_boundary", fit.at_boundary},
         {"optimizer_runs", fit.optimizer_runs},
         {"evaluations", fit.evaluations},
         {"start_values", fit.trace},
         {"warnings", fit.warnings}};
  if (fit.cov) {
    j["covariance"] = Json{{"K", to_json(fit.cov->K)},
                           {"Gamma1", to_json(fit.cov->Gamma1)},
                           {"Gamma2", to_json(fit.cov->Gamma2)},
                           {"Sigma", to_json(fit.cov->Sigma)}};
  } else {
    j["covariance"] = nullptr;
  }
  return j;
}

Json to_json(const SelectionReport& report) {
  Json tables = Json::array();
  for (const auto& t : report.tables) {
    Json tj{{"criterion", to_string(t.criterion)}};
    if (report.strategy == Strategy::Joint) {
      tj["values"] = to_json(t.values);
    } else {
      tj["stage1"] = to_json(t.stage1);
      tj["stage2"] = to_json(t.stage2);
    }
    tj["weights"] = to_json(t.weights);
    tj["selected"] = Json{
        {"diffusion", t.m1 >= 0 ? Json(report.diffusion_names[static_cast<std::size_t>(t.m1)]) : Json(nullptr)},
        {"drift", t.m2 >= 0 ? Json(report.drift_names[static_cast<std::size_t>(t.m2)]) : Json(nullptr)},
        {"m1", t.m1 + 1},
        {"m2", t.m2 + 1}};
    tables.push_back(tj);
  }
  Json fits = Json::array();
  for (const auto& cf : report.fits) {
    Json fj{{"diffusion", report.diffusion_names[static_cast<std::size_t>(cf.m1)]},
            {"drift", cf.m2 >= 0 ? Json(report.drift_names[static_cast<std::size_t>(cf.m2)]) : Json(nullptr)}};
    if (cf.fit) fj["fit"] = to_json(*cf.fit);
    if (cf.alpha_stage) {
      fj["alpha"] = to_json(cf.alpha_stage->alpha);
      fj["h1"] = cf.alpha_stage->h1;
      fj["converged"] = cf.alpha_stage->converged;
    }
    if (!cf.error.empty()) fj["error"] = cf.error;
    fits.push_back(fj);
  }
  return Json{{"schema_version", kSchemaVersion},
              {"strategy", to_string(report.strategy)},
              {"criterion", to_string(report.primary)},
              {"n", report.n},
              {"diffusion_candidates", report.diffusion_names},
              {"drift_candidates", report.drift_names},
              {"layout", "rows are drift candidates, columns diffusion candidates"},
              {"tables", tables},
              {"optimizations", report.optimizations},
              {"fits", fits},
              {"warnings", report.warnings}};
}

void write_matrix_csv(const Matrix& m, const std::vector<std::string>& row_names,
                      const std::vector<std::string>& col_names, const std::string& corner,
                      const std::filesystem::path& file) {
  auto out = open_out(file);
  out << corner;
  for (const auto& c : col_names) out << "," << c;
  out << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << row_names[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << "," << format_double(m(r, c));
    out << "\n";
  }
}

void write_selection_csv(const SelectionReport& report, Criterion criterion, const std::filesystem::path& file) {
  write_matrix_csv(report.table(criterion).weights, report.drift_names, report.diffusion_names, "drift", file);
}

void write_json(const Json& j, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << j.dump(2) << "\n";
}

Json read_json(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
  }
}

}  // namespace hfdiff
