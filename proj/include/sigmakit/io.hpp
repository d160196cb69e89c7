#pragma once

// Report writing with fixed float formatting so that outputs are byte-stable.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sigmakit/linalg.hpp"

namespace sigmakit {

using Json = nlohmann::ordered_json;

/// 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);

/// Indented JSON with every float printed by format_double (non-finite as null).
std::string dump_json(const Json& j);

Json to_json(const Vec& v);
Json to_json(const Mat& m);  // list of rows

std::string csv_line(const std::vector<std::string>& cells);

/// Creates parent directories as needed; throws std::runtime_error on failure.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace sigmakit
