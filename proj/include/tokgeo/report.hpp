#pragma once

// Output helpers: CSV/JSON emission with round-trippable numbers and atomic
// file replacement.

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokgeo/dimensions.hpp"
#include "tokgeo/dynamics.hpp"
#include "tokgeo/errors.hpp"
#include "tokgeo/geometry.hpp"

namespace tokgeo {

inline constexpr const char* tool_version = "0.1.0";

// 17 significant digits: parses back to the identical double.
inline std::string format_double(double v) {
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError("not a number: '" + s + "'");
  return v;
}

// Replaces path with content via a temporary sibling and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// Minimal CSV writer: comma separated, LF line endings, header row first.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw SpecError("CSV row width mismatch");
    rows_.push_back(std::move(row));
  }

  std::size_t row_count() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Header plus rows; no quoting (the emitted tables never need it).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

struct Provenance {
  std::string trace_path;
  std::optional<std::string> calibration_path;
  std::string tool_version = tokgeo::tool_version;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const Provenance& p) {
  nlohmann::json j;
  j["trace_path"] = p.trace_path;
  j["calibration_path"] = p.calibration_path ? nlohmann::json(*p.calibration_path) : nlohmann::json(nullptr);
  j["tool_version"] = p.tool_version;
  j["seed"] = p.seed;
  return j;
}

struct LayerRecord {
  int layer = 0;
  double e = 0.0;
  double cosine = 0.0;
  std::optional<SpectrumReport> spectrum;
};

struct AnalysisReport {
  std::vector<LayerRecord> records;
  CorrelatorSeries series;
  std::optional<DimensionEstimate> dimensions;
  Provenance provenance;
};

inline nlohmann::json to_json(const SpectrumReport& s) {
  nlohmann::json j;
  j["clip_threshold"] = s.clip_threshold;
  j["condition_number"] = s.condition_number;
  j["num_clipped"] = s.num_clipped;
  j["eigenvalues"] = s.eigenvalues;
  return j;
}

inline nlohmann::json to_json(const Calibration& c) {
  nlohmann::json j;
  j["e_random"] = c.e_random;
  j["d_embed"] = c.d_embed;
  j["constant"] = c.constant;
  j["source_label"] = c.source_label;
  j["baseline_argmin_layer"] = c.baseline_argmin_layer;
  j["token_count"] = c.token_count;
  if (c.plateau)
    j["plateau"] = {{"start_layer", c.plateau->start_layer}, {"value", c.plateau->value}};
  else
    j["plateau"] = nullptr;
  j["min_on_plateau"] = c.min_on_plateau;
  j["warnings"] = c.warnings;
  return j;
}

inline nlohmann::json to_json(const DimensionEstimate& d) {
  nlohmann::json j;
  j["e_model"] = d.e_model;
  j["e_machine"] = d.e_machine;
  j["d_model"] = d.d_model;
  j["d_machine"] = d.d_machine;
  j["working_layer"] = d.working_layer;
  j["calibration"] = to_json(d.calibration);
  j["warnings"] = d.warnings;
  return j;
}

inline nlohmann::json to_json(const AnalysisReport& r) {
  nlohmann::json j;
  j["provenance"] = to_json(r.provenance);
  j["argmin_layer"] = r.series.argmin_layer;
  j["e_model"] = r.series.e_model;
  j["e_final"] = r.series.e_final;
  auto layers = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json l;
    l["layer"] = rec.layer;
    l["E"] = rec.e;
    l["cosine"] = rec.cosine;
    if (rec.spectrum) {
      l["kappa"] = rec.spectrum->condition_number;
      l["num_clipped"] = rec.spectrum->num_clipped;
      l["spectrum"] = to_json(*rec.spectrum);
    }
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  j["dimensions"] = r.dimensions ? to_json(*r.dimensions) : nlohmann::json(nullptr);
  return j;
}

inline CsvTable series_csv(const AnalysisReport& r) {
  CsvTable t({"layer", "E", "cosine", "kappa", "num_clipped"});
  for (const auto& rec : r.records) {
    t.add_row({std::to_string(rec.layer), format_double(rec.e), format_double(rec.cosine),
               rec.spectrum ? format_double(rec.spectrum->condition_number) : std::string(),
               rec.spectrum ? std::to_string(rec.spectrum->num_clipped) : std::string()});
  }
  return t;
}

inline CsvTable cascade_csv(const CascadeResult& c) {
  CsvTable t({"step", "d", "E_measured", "ratio_measured", "ratio_predicted", "conservation"});
  t.add_row({"0", std::to_string(c.ambient_dim), format_double(c.e_series.front()), "", "",
             format_double(c.conservation_series.front())});
  for (std::size_t k = 0; k < c.schedule.size(); ++k) {
    t.add_row({std::to_string(k + 1), std::to_string(c.schedule[k].d_after), format_double(c.e_series[k + 1]),
               format_double(c.measured_ratios[k]), format_double(c.predicted_ratios[k]),
               format_double(c.conservation_series[k + 1])});
  }
  return t;
}

}  // namespace tokgeo
