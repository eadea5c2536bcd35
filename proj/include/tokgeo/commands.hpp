#pragma once

// Implementations of the command-line subcommands. Each returns its
// in-memory result and writes its output files; the CLI front end only
// parses arguments and maps exceptions to exit codes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokgeo/actdump.hpp"
#include "tokgeo/dimensions.hpp"
#include "tokgeo/dynamics.hpp"
#include "tokgeo/errors.hpp"
#include "tokgeo/geometry.hpp"
#include "tokgeo/report.hpp"
#include "tokgeo/synthetic.hpp"

namespace tokgeo {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("cannot parse " + path.string() + ": " + e.what());
  }
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---- analyze ---------------------------------------------------------------

struct AnalyzeOptions {
  bool spectra = false;
  double clip = default_clip_threshold;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
};

inline AnalysisReport analyze_trace(const ActivationTrace& trace, const AnalyzeOptions& opts) {
  AnalysisReport report;
  report.series = correlator_series(trace);
  report.provenance.seed = opts.seed;
  for (std::size_t k = 0; k < trace.layers.size(); ++k) {
    LayerRecord rec;
    rec.layer = trace.layers[k].layer_index;
    rec.e = report.series.values[k];
    rec.cosine = report.series.cosine[k];
    if (opts.spectra)
      rec.spectrum = gram_spectrum(select_rows(trace.layers[k].values, trace.manifest.excluded_token_positions),
                                   opts.clip);
    report.records.push_back(std::move(rec));
  }
  return report;
}

inline AnalysisReport cmd_analyze(const std::filesystem::path& trace_path, const AnalyzeOptions& opts) {
  const auto trace = read_trace(trace_path);
  auto report = analyze_trace(trace, opts);
  report.provenance.trace_path = trace_path.string();
  write_file_atomic(opts.out_dir / "report.json", dump_json(to_json(report)));
  write_file_atomic(opts.out_dir / "series.csv", series_csv(report).str());
  return report;
}

// ---- dims ------------------------------------------------------------------

struct DimsOptions {
  bool allow_mismatch = false;
  std::vector<std::filesystem::path> multi_baselines;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  PlateauOptions plateau;
};

inline Calibration calibrate_trace(const ActivationTrace& baseline, const PlateauOptions& plateau) {
  return calibrate(correlator_series(baseline), baseline.manifest, plateau);
}

inline DimensionEstimate dims_for_traces(const ActivationTrace& model, const std::vector<ActivationTrace>& baselines,
                                         const DimsOptions& opts) {
  std::vector<Calibration> cals;
  for (const auto& b : baselines) {
    if (b.manifest.embed_dim != model.manifest.embed_dim)
      throw CalibrationError("baseline embed_dim " + std::to_string(b.manifest.embed_dim) +
                             " differs from model embed_dim " + std::to_string(model.manifest.embed_dim));
    if (b.manifest.token_count != model.manifest.token_count && !opts.allow_mismatch)
      throw CalibrationError("baseline token_count " + std::to_string(b.manifest.token_count) +
                             " differs from model token_count " + std::to_string(model.manifest.token_count) +
                             " (pass --allow-mismatch to override)");
    cals.push_back(calibrate_trace(b, opts.plateau));
  }
  return estimate_dimensions(correlator_series(model), average_calibrations(cals));
}

inline DimensionEstimate cmd_dims(const std::filesystem::path& model_path, const std::filesystem::path& baseline_path,
                                  const DimsOptions& opts) {
  const auto model = read_trace(model_path);
  std::vector<ActivationTrace> baselines;
  baselines.push_back(read_trace(baseline_path));
  for (const auto& p : opts.multi_baselines) baselines.push_back(read_trace(p));
  auto est = dims_for_traces(model, baselines, opts);

  nlohmann::json j = to_json(est);
  Provenance prov;
  prov.trace_path = model_path.string();
  prov.calibration_path = baseline_path.string();
  prov.seed = opts.seed;
  j["provenance"] = to_json(prov);
  auto extra = nlohmann::json::array();
  for (const auto& p : opts.multi_baselines) extra.push_back(p.string());
  j["provenance"]["multi_baselines"] = extra;
  j["d_embed"] = model.manifest.embed_dim;
  write_file_atomic(opts.out_dir / "dims.json", dump_json(j));
  return est;
}

// ---- simulate --------------------------------------------------------------

struct CascadeSpec {
  int embed_dim = 0;    // D
  int token_count = 0;  // N
  double e0 = 0.05;     // target initial correlator
  double sigma = 1.0;
  std::vector<int> schedule;  // dd per step, <= 0
  int seeds = 1;
  NormalConstraint constraint = NormalConstraint::others_span;
};

// {"D": 512, "N": 64, "E0": 0.05, "schedule": [-64, -64, -64] | "dims": [512, 448, ...],
//  "seeds": 20, "constraint": "others_span"}
inline CascadeSpec cascade_spec_from_json(const nlohmann::json& j) {
  CascadeSpec spec;
  try {
    spec.embed_dim = j.at("D").get<int>();
    spec.token_count = j.at("N").get<int>();
    spec.e0 = j.value("E0", 0.05);
    spec.sigma = j.value("sigma", 1.0);
    spec.seeds = j.value("seeds", 1);
    if (j.contains("schedule")) {
      spec.schedule = j["schedule"].get<std::vector<int>>();
    } else if (j.contains("dims")) {
      const auto dims = j["dims"].get<std::vector<int>>();
      if (dims.empty() || dims.front() != spec.embed_dim) throw SpecError("dims must start at D");
      spec.schedule = schedule_from_dims(dims);
    } else {
      throw SpecError("cascade spec needs 'schedule' or 'dims'");
    }
    if (j.contains("constraint")) spec.constraint = normal_constraint_from_string(j["constraint"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed cascade spec: ") + e.what());
  }
  if (spec.embed_dim < 2 || spec.token_count < 2) throw SpecError("D and N must be >= 2");
  if (!(spec.e0 > 0.0 && spec.e0 < 1.0)) throw SpecError("E0 must lie in (0, 1)");
  if (!(spec.sigma > 0.0)) throw SpecError("sigma must be positive");
  if (spec.seeds < 1) throw SpecError("seeds must be >= 1");
  for (int dd : spec.schedule)
    if (dd > 0) throw SpecError("schedule entries are dimension changes and must be <= 0");
  return spec;
}

inline Matrix cascade_initial_ensemble(const CascadeSpec& spec, std::uint64_t seed) {
  return shared_mean_ensemble(spec.token_count, spec.embed_dim, mean_norm_for_correlator(spec.e0, spec.embed_dim) * spec.sigma,
                              spec.sigma, seed, 0x696e6974u);
}

inline CascadeResult simulate_one(const CascadeSpec& spec, std::uint64_t seed, bool keep_states = false) {
  CascadeOptions opts;
  opts.constraint = spec.constraint;
  opts.keep_states = keep_states;
  return run_cascade(cascade_initial_ensemble(spec, seed), spec.schedule, seed, opts);
}

struct CampaignSummary {
  double worst_ratio_rel_error = 0.0;       // max over seeds, steps
  double worst_conservation_drift = 0.0;    // max over seeds, steps of |C_k / C_0 - 1|
  std::vector<double> mean_numerator_change;  // per step, averaged over seeds
  double worst_numerator_change = 0.0;
};

inline double relative_error(double measured, double expected) { return std::abs(measured / expected - 1.0); }

inline CampaignSummary summarize_campaign(const std::vector<CascadeResult>& runs) {
  CampaignSummary s;
  if (runs.empty()) return s;
  s.mean_numerator_change.assign(runs.front().schedule.size(), 0.0);
  for (const auto& r : runs) {
    for (std::size_t k = 0; k < r.schedule.size(); ++k) {
      s.worst_ratio_rel_error = std::max(s.worst_ratio_rel_error, relative_error(r.measured_ratios[k], r.predicted_ratios[k]));
      const double change = relative_error(r.numerator_series[k + 1], r.numerator_series[k]);
      s.mean_numerator_change[k] += change / static_cast<double>(runs.size());
      s.worst_numerator_change = std::max(s.worst_numerator_change, change);
    }
    for (double c : r.conservation_series)
      s.worst_conservation_drift = std::max(s.worst_conservation_drift, relative_error(c, r.conservation_series.front()));
  }
  return s;
}

struct SimulateOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> trace_out;  // emit baseline/model traces of the first seed
};

struct SimulateOutput {
  std::vector<CascadeResult> runs;
  CampaignSummary summary;
};

// Model trace: one layer per cascade state. Baseline trace: the unprojected
// ensemble as a two-layer random_init trace.
inline std::pair<ActivationTrace, ActivationTrace> cascade_traces(const CascadeResult& run) {
  if (run.states.empty()) throw SpecError("cascade run kept no states");
  const auto& first = run.states.front();
  Manifest m;
  m.token_count = static_cast<int>(first.rows());
  m.embed_dim = static_cast<int>(first.cols());

  ActivationTrace model;
  model.manifest = m;
  model.manifest.model_label = "cascade";
  model.manifest.layer_count = static_cast<int>(run.states.size());
  for (std::size_t k = 0; k < run.states.size(); ++k) model.layers.push_back({static_cast<int>(k), run.states[k]});

  ActivationTrace baseline;
  baseline.manifest = m;
  baseline.manifest.model_label = "cascade-baseline";
  baseline.manifest.layer_count = 2;
  baseline.manifest.random_init = true;
  baseline.layers.push_back({0, first});
  baseline.layers.push_back({1, first});
  return {std::move(model), std::move(baseline)};
}

inline SimulateOutput cmd_simulate(const std::filesystem::path& spec_path, std::uint64_t seed,
                                   const SimulateOptions& opts) {
  const auto spec = cascade_spec_from_json(read_json_file(spec_path));
  SimulateOutput out;
  for (int k = 0; k < spec.seeds; ++k) {
    const bool keep = k == 0 && opts.trace_out.has_value();
    out.runs.push_back(simulate_one(spec, seed + static_cast<std::uint64_t>(k), keep));
  }
  out.summary = summarize_campaign(out.runs);

  write_file_atomic(opts.out_dir / "cascade.csv", cascade_csv(out.runs.front()).str());
  CsvTable campaign({"seed", "step", "d", "E_measured", "ratio_measured", "ratio_predicted", "conservation",
                     "numerator", "cos2_measured", "cos2_predicted_ambient", "cos2_expected_complement",
                     "complement_dim"});
  for (std::size_t r = 0; r < out.runs.size(); ++r) {
    const auto& run = out.runs[r];
    const auto s = std::to_string(seed + r);
    campaign.add_row({s, "0", std::to_string(run.ambient_dim), format_double(run.e_series[0]), "", "",
                      format_double(run.conservation_series[0]), format_double(run.numerator_series[0]), "", "", "",
                      ""});
    for (std::size_t k = 0; k < run.schedule.size(); ++k)
      campaign.add_row({s, std::to_string(k + 1), std::to_string(run.schedule[k].d_after),
                        format_double(run.e_series[k + 1]), format_double(run.measured_ratios[k]),
                        format_double(run.predicted_ratios[k]), format_double(run.conservation_series[k + 1]),
                        format_double(run.numerator_series[k + 1]), format_double(run.cos2_measured[k]),
                        format_double(run.cos2_predicted_ambient[k]), format_double(run.cos2_expected_complement[k]),
                        std::to_string(run.min_complement_dims[k])});
  }
  write_file_atomic(opts.out_dir / "campaign.csv", campaign.str());

  nlohmann::json summary;
  summary["seeds"] = spec.seeds;
  summary["base_seed"] = seed;
  summary["constraint"] = to_string(spec.constraint);
  summary["worst_ratio_rel_error"] = out.summary.worst_ratio_rel_error;
  summary["worst_conservation_drift"] = out.summary.worst_conservation_drift;
  summary["mean_numerator_change"] = out.summary.mean_numerator_change;
  summary["worst_numerator_change"] = out.summary.worst_numerator_change;
  summary["tool_version"] = tool_version;
  write_file_atomic(opts.out_dir / "campaign.json", dump_json(summary));

  if (opts.trace_out) {
    auto [model, baseline] = cascade_traces(out.runs.front());
    write_trace(model, *opts.trace_out / "model");
    write_trace(baseline, *opts.trace_out / "baseline");
  }
  return out;
}

// ---- oracle ----------------------------------------------------------------

struct OracleRow {
  int d = 0;
  MonteCarloEstimate mc;
  double exact = 0.0;  // 1/d
  double asymptotic = 0.0;  // large-d approximation 1/(d-1)
  double approx_rel_gap = 0.0;  // |1/(d-1) - 1/d| / (1/d)
};

inline OracleRow oracle_row(int d, long samples, std::uint64_t seed) {
  OracleRow row;
  row.d = d;
  row.mc = mc_cos2_expectation(d, samples, seed);
  row.exact = 1.0 / d;
  row.asymptotic = 1.0 / (d - 1);
  row.approx_rel_gap = std::abs(row.asymptotic - row.exact) / row.exact;
  return row;
}

inline CsvTable oracle_csv(const std::vector<OracleRow>& rows) {
  CsvTable t({"d", "mc_mean", "std_err", "exact", "asymptotic", "approx_rel_gap", "z_score"});
  for (const auto& r : rows)
    t.add_row({std::to_string(r.d), format_double(r.mc.mean), format_double(r.mc.standard_error),
               format_double(r.exact), format_double(r.asymptotic), format_double(r.approx_rel_gap),
               format_double((r.mc.mean - r.exact) / r.mc.standard_error)});
  return t;
}

inline std::vector<OracleRow> cmd_oracle(const std::vector<int>& dims, long samples, std::uint64_t seed,
                                         const std::filesystem::path& out_dir) {
  std::vector<OracleRow> rows;
  for (int d : dims) rows.push_back(oracle_row(d, samples, seed));
  write_file_atomic(out_dir / "oracle.csv", oracle_csv(rows).str());
  return rows;
}

// ---- synth -----------------------------------------------------------------

inline ActivationTrace cmd_synth(const std::filesystem::path& spec_path, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  auto trace = generate_synthetic_trace(synthetic_spec_from_json(read_json_file(spec_path)), seed);
  write_trace(trace, out_dir);
  return trace;
}

}  // namespace tokgeo
