#pragma once

// JSON reports and CSV batch dumps.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slerev/experiments.hpp"

namespace slerev {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline ordered_json to_json(const Statistic& s) {
  ordered_json j;
  j["name"] = s.name;
  j["value"] = detail::number_or_null(s.value);
  j["std_error"] = detail::number_or_null(s.std_error);
  if (s.permutations > 0) j["permutations"] = s.permutations;
  if (s.samples > 0) j["samples"] = s.samples;
  if (s.fitted) j["fitted"] = true;
  return j;
}

inline ordered_json to_json(const Check& c) {
  return ordered_json{{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
}

inline ordered_json to_json(const ExperimentReport& r) {
  ordered_json j;
  j["experiment"] = r.name;
  j["verdict"] = r.verdict() ? "pass" : "fail";
  ordered_json params = ordered_json::object();
  for (const auto& [k, v] : r.params) params[k] = detail::number_or_null(v);
  j["params"] = params;
  j["samples"] = {{"n", r.samples.n},
                  {"dt", r.samples.dt},
                  {"seed", r.samples.seed},
                  {"replicate_seeds", r.samples.replicate_seeds}};
  j["checks"] = ordered_json::array();
  for (const auto& c : r.checks) j["checks"].push_back(to_json(c));
  j["statistics"] = ordered_json::array();
  for (const auto& s : r.statistics) j["statistics"].push_back(to_json(s));
  j["warnings"] = r.warnings;
  return j;
}

inline ordered_json to_json(const DiscretizationComparison& d) {
  ordered_json j;
  j["verdict"] = d.verdict() ? "pass" : "fail";
  j["checks"] = ordered_json::array();
  for (const auto& c : d.checks) j["checks"].push_back(to_json(c));
  j["half_dt_report"] = to_json(d.fine);
  return j;
}

inline double number_from_json(const ordered_json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

/// Inverse of to_json(ExperimentReport), for cached reports.
inline ExperimentReport report_from_json(const ordered_json& j) {
  ExperimentReport r;
  r.name = j.at("experiment").get<std::string>();
  for (const auto& [k, v] : j.at("params").items()) r.params.emplace_back(k, number_from_json(v));
  const auto& s = j.at("samples");
  r.samples.n = s.at("n").get<std::size_t>();
  r.samples.dt = s.at("dt").get<double>();
  r.samples.seed = s.at("seed").get<std::uint64_t>();
  r.samples.replicate_seeds = s.at("replicate_seeds").get<std::vector<std::uint64_t>>();
  for (const auto& c : j.at("checks")) {
    r.check(c.at("name").get<std::string>(), c.at("passed").get<bool>(), c.at("detail").get<std::string>());
  }
  for (const auto& st : j.at("statistics")) {
    Statistic x;
    x.name = st.at("name").get<std::string>();
    x.value = number_from_json(st.at("value"));
    x.std_error = number_from_json(st.at("std_error"));
    x.permutations = st.value("permutations", 0);
    x.samples = st.value("samples", std::size_t{0});
    x.fitted = st.value("fitted", false);
    r.add(x);
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

/// Wraps a report with the run configuration and a timestamp. The timestamp
/// is the only field that differs between identical runs.
inline ordered_json report_document(const ordered_json& config, const ExperimentReport& r,
                                    const DiscretizationComparison* comparison = nullptr) {
  ordered_json doc;
  doc["timestamp"] = detail::utc_timestamp();
  doc["config"] = config;
  doc["report"] = to_json(r);
  if (comparison) doc["discretization"] = to_json(*comparison);
  return doc;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Column names: meta first, then Re/Im of each test point.
inline std::vector<std::string> csv_header(std::size_t points) {
  std::vector<std::string> h = {"seed", "kind", "x1", "x2", "r", "t0"};
  for (std::size_t i = 0; i < points; ++i) {
    h.push_back("z" + std::to_string(i) + "_re");
    h.push_back("z" + std::to_string(i) + "_im");
  }
  return h;
}

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes one row per sample. An empty batch is an error and creates no file.
inline void emit_csv(std::span<const MapSample> batch, const std::filesystem::path& path) {
  if (batch.empty()) throw std::invalid_argument("emit_csv: empty batch");
  const std::size_t points = batch.front().values.size();
  std::ostringstream os;
  const auto header = csv_header(points);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& s : batch) {
    if (s.values.size() != points) throw std::invalid_argument("emit_csv: ragged batch");
    os << s.meta.seed << ',' << s.meta.kind << ',' << format_full(s.meta.x1) << ','
       << format_full(s.meta.x2) << ',' << format_full(s.meta.r) << ',' << format_full(s.meta.t0);
    for (const auto& z : s.values) os << ',' << format_full(z.real()) << ',' << format_full(z.imag());
    os << '\n';
  }
  write_text_file(path, os.str());
}

/// Reads a file written by emit_csv.
inline std::vector<MapSample> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv " + path.string());
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (columns < 6 || (columns - 6) % 2 != 0) throw std::runtime_error("malformed csv header");
  std::vector<MapSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != columns) throw std::runtime_error("malformed csv row");
    MapSample s;
    s.meta.seed = std::stoull(cells[0]);
    s.meta.kind = cells[1];
    s.meta.x1 = std::strtod(cells[2].c_str(), nullptr);
    s.meta.x2 = std::strtod(cells[3].c_str(), nullptr);
    s.meta.r = std::strtod(cells[4].c_str(), nullptr);
    s.meta.t0 = std::strtod(cells[5].c_str(), nullptr);
    for (std::size_t k = 6; k < cells.size(); k += 2) {
      s.values.emplace_back(std::strtod(cells[k].c_str(), nullptr),
                            std::strtod(cells[k + 1].c_str(), nullptr));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace slerev
