#include "cdkf/io.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace cdkf {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : path_(path.string()), columns_(header.size()), out_(path) {
  if (!out_) throw Error("cannot open output file: " + path_);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) {
    throw Error("csv row width mismatch in " + path_);
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << format_double(values[i]);
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw Error("csv row width mismatch in " + path_);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open csv file: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error("csv file has no header: " + path.string());
  }
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      const auto res =
          std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) {
        throw Error("csv parse error at " + path.string() + ":" +
                    std::to_string(line_no));
      }
      row.push_back(v);
    }
    if (row.size() != table.header.size()) {
      throw Error("csv row width mismatch at " + path.string() + ":" +
                  std::to_string(line_no));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["scenario"] = scenario;
  j["config_path"] = config_path;
  j["seed"] = seed;
  j["tool_version"] = tool_version;
  j["created_utc"] = created_utc;
  j["outputs"] = outputs;
  return j;
}

RunManifest make_manifest(const std::string& command,
                          const std::string& scenario,
                          const std::string& config_path, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.scenario = scenario;
  m.config_path = config_path;
  m.seed = seed;
  m.tool_version = CDKF_SCHED_VERSION;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.created_utc = buf;
  return m;
}

void write_manifest(const std::filesystem::path& dir,
                    const RunManifest& manifest) {
  write_json(dir / "run_manifest.json", manifest.to_json());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open output file: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace cdkf
