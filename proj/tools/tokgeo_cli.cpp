// tokgeo command-line front end.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tokgeo/commands.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw tokgeo::SpecError("bad integer '" + item + "' in list");
    }
  }
  return out;
}

int report_error(const std::string& kind, int status, const std::string& message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_status"] = status;
  std::cerr << j.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise token geometry diagnostics for hidden-state dumps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tokgeo::tool_version);

  std::uint64_t seed = 0;

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Correlator series (and optional Gram spectra) for a trace");
  std::string analyze_trace;
  tokgeo::AnalyzeOptions analyze_opts;
  std::string analyze_out = ".";
  analyze->add_option("trace", analyze_trace, "Trace directory")->required();
  analyze->add_flag("--spectra", analyze_opts.spectra, "Compute clipped Gram spectra per layer");
  analyze->add_option("--clip", analyze_opts.clip, "Eigenvalue clip threshold")->capture_default_str();
  analyze->add_option("--out", analyze_out, "Output directory")->capture_default_str();
  analyze->add_option("--seed", seed, "Seed recorded in provenance");

  // dims
  auto* dims = app.add_subcommand("dims", "Calibrate on a random-init baseline and extract d_model / d_machine");
  std::string model_trace;
  std::string baseline_trace;
  std::vector<std::string> multi;
  tokgeo::DimsOptions dims_opts;
  std::string dims_out = ".";
  dims->add_option("model-trace", model_trace, "Trained-model trace directory")->required();
  dims->add_option("baseline-trace", baseline_trace, "Random-init baseline trace directory")->required();
  dims->add_flag("--allow-mismatch", dims_opts.allow_mismatch, "Allow differing token counts");
  dims->add_option("--multi-baseline", multi, "Additional baseline traces averaged into E_random");
  dims->add_option("--plateau-window", dims_opts.plateau.window, "Plateau run length")->capture_default_str();
  dims->add_option("--plateau-tol", dims_opts.plateau.rel_tol, "Plateau relative tolerance")->capture_default_str();
  dims->add_option("--out", dims_out, "Output directory")->capture_default_str();
  dims->add_option("--seed", seed, "Seed recorded in provenance");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a synthetic projection cascade");
  std::string cascade_spec;
  tokgeo::SimulateOptions sim_opts;
  std::string sim_out = ".";
  std::string trace_out;
  simulate->add_option("spec", cascade_spec, "Cascade spec JSON")->required();
  simulate->add_option("--seed", seed, "Base seed")->required();
  simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();
  simulate->add_option("--trace-out", trace_out, "Also write model/ and baseline/ traces of the first seed");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Monte Carlo <cos^2> against 1/d and 1/(d-1)");
  std::string oracle_dims = "2,10,100,1000";
  long samples = 1000000;
  std::string oracle_out = ".";
  oracle->add_option("--dims", oracle_dims, "Comma-separated dimensions")->capture_default_str();
  oracle->add_option("--samples", samples, "Samples per dimension")->capture_default_str();
  oracle->add_option("--seed", seed, "Seed")->required();
  oracle->add_option("--out", oracle_out, "Output directory")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic trace");
  std::string synth_spec;
  std::string synth_out;
  synth->add_option("spec", synth_spec, "Synthetic trace spec JSON")->required();
  synth->add_option("--seed", seed, "Seed")->required();
  synth->add_option("--out", synth_out, "Output trace directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (analyze->parsed()) {
      analyze_opts.out_dir = analyze_out;
      analyze_opts.seed = seed;
      const auto report = tokgeo::cmd_analyze(analyze_trace, analyze_opts);
      std::cout << "argmin_layer=" << report.series.argmin_layer
                << " E_model=" << tokgeo::format_double(report.series.e_model)
                << " E_final=" << tokgeo::format_double(report.series.e_final) << "\n";
    } else if (dims->parsed()) {
      dims_opts.out_dir = dims_out;
      dims_opts.seed = seed;
      for (const auto& m : multi) dims_opts.multi_baselines.emplace_back(m);
      const auto est = tokgeo::cmd_dims(model_trace, baseline_trace, dims_opts);
      for (const auto& w : est.calibration.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& w : est.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "d_model=" << tokgeo::format_double(est.d_model)
                << " d_machine=" << tokgeo::format_double(est.d_machine) << "\n";
    } else if (simulate->parsed()) {
      sim_opts.out_dir = sim_out;
      if (!trace_out.empty()) sim_opts.trace_out = trace_out;
      const auto out = tokgeo::cmd_simulate(cascade_spec, seed, sim_opts);
      std::cout << "worst_ratio_rel_error=" << tokgeo::format_double(out.summary.worst_ratio_rel_error)
                << " worst_conservation_drift=" << tokgeo::format_double(out.summary.worst_conservation_drift)
                << "\n";
    } else if (oracle->parsed()) {
      const auto rows = tokgeo::cmd_oracle(parse_int_list(oracle_dims), samples, seed, oracle_out);
      std::cout << tokgeo::oracle_csv(rows).str();
    } else if (synth->parsed()) {
      const auto trace = tokgeo::cmd_synth(synth_spec, seed, synth_out);
      std::cout << "wrote " << trace.manifest.layer_count << " layers to " << synth_out << "\n";
    }
  } catch (const tokgeo::Error& e) {
    return report_error(e.kind(), e.exit_status(), e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", 3, e.what());
  }
  return 0;
}
