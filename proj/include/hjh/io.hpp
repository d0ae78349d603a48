#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "hjh/cell.hpp"
#include "hjh/problem.hpp"

namespace hjh {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Problem documents: see docs in README ("Problem schema").
ProblemSpec problem_from_json(const Json& doc);
Json problem_to_json(const ProblemSpec& spec);
ProblemSpec load_problem(const std::filesystem::path& path);

InitialData initial_data_from_json(const Json& doc, int dim);
Json initial_data_to_json(const InitialData& g);

TrigSeries series_from_json(const Json& doc, int dim);
Json series_to_json(const TrigSeries& s);

/// Tables are stored as a JSON header with base64-encoded little-endian
/// float64 arrays.
Json table_to_json(const EffectiveTable& table);
EffectiveTable table_from_json(const Json& doc);
void save_table(const EffectiveTable& table, const std::filesystem::path& path);
EffectiveTable load_table(const std::filesystem::path& path);

std::string encode_doubles(const std::vector<double>& v);
std::vector<double> decode_doubles(const std::string& s);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& doc, const std::filesystem::path& path);

/// Checks schema_version and throws InvalidInput on mismatch.
void require_schema(const Json& doc, const std::string& what);

}  // namespace hjh
