#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// vendor single-header nlohmann/json
#include <json.hpp>

#include "cdkf/errors.hpp"

namespace cdkf {

/// Shortest-round-trip decimal with 17 significant digits, independent of
/// the global locale.
std::string format_double(double value);

/// Minimal CSV writer: one header row, numeric cells via format_double.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void row(const std::vector<std::string>& cells);

 private:
  std::string path_;
  std::size_t columns_;
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

/// Provenance record written alongside every output set. Identical inputs
/// (command, config, seed, version) reproduce identical data files; only the
/// timestamp differs.
struct RunManifest {
  std::string command;
  std::string scenario;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string created_utc;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
};

RunManifest make_manifest(const std::string& command,
                          const std::string& scenario,
                          const std::string& config_path, std::uint64_t seed);

void write_manifest(const std::filesystem::path& dir,
                    const RunManifest& manifest);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cdkf
