#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "hfdiff/estimate.hpp"
#include "hfdiff/select.hpp"

namespace hfdiff {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Path CSV: header "j,x1,...,xd", then one row per observation j = 0..n.
void write_path_csv(const ObservationPath& path, const std::filesystem::path& file);
// Throws ParseError naming the offending row (1-based line number) or IoError.
ObservationPath read_path_csv(const std::filesystem::path& file);
ObservationPath parse_path_csv(std::istream& in);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);  // array of rows
Json to_json(const PathProvenance& p);
Json to_json(const FitResult& fit);
Json to_json(const SelectionReport& report);

// Rows are drift candidates, columns diffusion candidates; cells are weights
// of the given criterion.
void write_selection_csv(const SelectionReport& report, Criterion criterion, const std::filesystem::path& file);
void write_matrix_csv(const Matrix& m, const std::vector<std::string>& row_names,
                      const std::vector<std::string>& col_names, const std::string& corner,
                      const std::filesystem::path& file);

void write_json(const Json& j, const std::filesystem::path& file);
Json read_json(const std::filesystem::path& file);

// Shortest decimal form that round-trips.
std::string format_double(double x);

}  // namespace hfdiff
