#pragma once

// Calibration against a random-weight baseline and extraction of the
// working-space and semantic-space dimensions from a correlator series.
//
//   constant  = E_random * (d_embed - 1)
//   d_model   = constant / E_model   + 1     (E_model: series minimum)
//   d_machine = constant / E_machine + 1     (E_machine: final layer)

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tokgeo/errors.hpp"
#include "tokgeo/geometry.hpp"

namespace tokgeo {

struct Plateau {
  int start_layer = 0;
  double value = 0.0;  // mean over the run
};

// Earliest index s such that the run values[s..end] has length >= window
// and every consecutive pair in it differs by at most rel_tol relative to
// the larger magnitude of the pair.
inline std::optional<Plateau> detect_plateau(const std::vector<double>& values, int window, double rel_tol) {
  if (window < 2) throw SpecError("plateau window must be >= 2");
  const int n = static_cast<int>(values.size());
  if (n < window) return std::nullopt;
  auto flat = [&](int i) {
    const double a = values[static_cast<std::size_t>(i)];
    const double b = values[static_cast<std::size_t>(i) + 1];
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(b - a) <= rel_tol * scale;
  };
  int start = n - 1;
  while (start > 0 && flat(start - 1)) --start;
  if (n - start < window) return std::nullopt;
  double sum = 0.0;
  for (int i = start; i < n; ++i) sum += values[static_cast<std::size_t>(i)];
  return Plateau{start, sum / (n - start)};
}

struct PlateauOptions {
  int window = 3;
  double rel_tol = 0.1;
};

struct Calibration {
  double e_random = 0.0;
  int d_embed = 0;
  double constant = 0.0;
  std::string source_label;
  int baseline_argmin_layer = 0;
  int token_count = 0;
  std::optional<Plateau> plateau;
  bool min_on_plateau = false;
  std::vector<std::string> warnings;
};

inline Calibration calibrate(const CorrelatorSeries& baseline, int d_embed, bool random_init,
                             const std::string& source_label = {}, const PlateauOptions& plateau_opts = {}) {
  if (!random_init) throw CalibrationError("baseline series must come from a random_init trace");
  if (d_embed < 2) throw CalibrationError("d_embed must be >= 2");
  if (baseline.values.empty()) throw CalibrationError("empty baseline series");

  Calibration cal;
  cal.baseline_argmin_layer = argmin_first(baseline.values);
  cal.e_random = baseline.values[static_cast<std::size_t>(cal.baseline_argmin_layer)];
  if (!(cal.e_random > 0.0 && cal.e_random <= 1.0))
    throw CalibrationError("E_random = " + std::to_string(cal.e_random) + " lies outside (0, 1]");
  cal.d_embed = d_embed;
  cal.constant = cal.e_random * (d_embed - 1);
  cal.source_label = source_label;

  cal.plateau = detect_plateau(baseline.values, plateau_opts.window, plateau_opts.rel_tol);
  cal.min_on_plateau = cal.plateau && cal.baseline_argmin_layer >= cal.plateau->start_layer;
  if (!cal.plateau) {
    cal.warnings.push_back("no plateau detected in the baseline series; E_random is the plain minimum");
  } else if (!cal.min_on_plateau) {
    cal.warnings.push_back("baseline minimum at layer " + std::to_string(cal.baseline_argmin_layer) +
                           " precedes the plateau starting at layer " + std::to_string(cal.plateau->start_layer) +
                           " (plateau value " + std::to_string(cal.plateau->value) + ")");
  }
  return cal;
}

inline Calibration calibrate(const CorrelatorSeries& baseline, const Manifest& manifest,
                             const PlateauOptions& plateau_opts = {}) {
  auto cal = calibrate(baseline, manifest.embed_dim, manifest.random_init, manifest.model_label, plateau_opts);
  cal.token_count = manifest.token_count;
  return cal;
}

// Averages E_random over several baselines sharing d_embed.
inline Calibration average_calibrations(const std::vector<Calibration>& cals) {
  if (cals.empty()) throw CalibrationError("no calibrations to average");
  Calibration out = cals.front();
  double sum = 0.0;
  for (const auto& c : cals) {
    if (c.d_embed != out.d_embed) throw CalibrationError("baselines disagree on d_embed");
    sum += c.e_random;
    if (&c != &cals.front()) out.warnings.insert(out.warnings.end(), c.warnings.begin(), c.warnings.end());
  }
  out.e_random = sum / static_cast<double>(cals.size());
  out.constant = out.e_random * (out.d_embed - 1);
  if (cals.size() > 1) out.source_label += " (+" + std::to_string(cals.size() - 1) + " averaged)";
  return out;
}

inline double dimension_from_correlator(double e, const Calibration& cal) { return cal.constant / e + 1.0; }

struct DimensionEstimate {
  double e_model = 0.0;
  double e_machine = 0.0;
  double d_model = 0.0;
  double d_machine = 0.0;
  int working_layer = 0;
  Calibration calibration;
  std::vector<std::string> warnings;
};

inline DimensionEstimate estimate_dimensions(const CorrelatorSeries& series, const Calibration& cal) {
  if (series.values.empty()) throw EstimationError("empty correlator series");
  DimensionEstimate est;
  est.working_layer = series.argmin_layer;
  est.e_model = series.e_model;
  est.e_machine = series.e_final;
  if (!(est.e_model > 0.0))
    throw EstimationError("E_model = " + std::to_string(est.e_model) + " is not positive; dimensions are undefined");
  if (!(est.e_machine > 0.0))
    throw EstimationError("E_machine = " + std::to_string(est.e_machine) +
                          " is not positive; dimensions are undefined");
  est.d_model = dimension_from_correlator(est.e_model, cal);
  est.d_machine = dimension_from_correlator(est.e_machine, cal);
  est.calibration = cal;
  const int last = static_cast<int>(series.values.size()) - 1;
  if (est.working_layer == 0 || est.working_layer == last)
    est.warnings.push_back("correlator minimum at boundary layer " + std::to_string(est.working_layer) +
                           "; expected an interior working layer");
  return est;
}

}  // namespace tokgeo
