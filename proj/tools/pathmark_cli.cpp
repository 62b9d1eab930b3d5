// Copyright 2026 The Pathmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pathmark/pathmark.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kValidation = 2, kIo = 3, kSchema = 4 };

struct Failure {
  int code;
  std::string message;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure{kIo, "cannot read '" + p.string() + "'"};
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw Failure{kIo, "error reading '" + p.string() + "'"};
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kIo, "cannot write '" + p.string() + "'"};
  out << text;
  if (!out) throw Failure{kIo, "error writing '" + p.string() + "'"};
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Failure{kIo, "SHA-256 failed"};
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json complex_json(pathmark::Complex z) { return json{{"re", z.real()}, {"im", z.imag()}, {"abs", std::abs(z)}}; }

// Every command that produces results writes them through a Run, which keeps
// track of inputs and outputs for the manifest.
struct Run {
  std::string command;
  json inputs = json::array();
  json parameters = json::object();
  std::optional<std::uint64_t> seed;
  json outputs = json::array();

  void input(const fs::path& p, const std::string& text) {
    inputs.push_back({{"path", p.string()}, {"sha256", sha256_hex(text)}});
  }
  void output(const fs::path& p, const std::string& text) {
    write_file(p, text);
    outputs.push_back({{"path", p.filename().string()}, {"sha256", sha256_hex(text)}});
  }
  void finish(const fs::path& manifest_path) const {
    json m;
    m["tool"] = "pathmark";
    m["version"] = pathmark::kVersion;
    m["command"] = command;
    m["inputs"] = inputs;
    m["parameters"] = parameters;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["outputs"] = outputs;
    write_file(manifest_path, m.dump(2) + "\n");
  }
};

void print_diagnostics(const std::vector<pathmark::Diagnostic>& diags, const std::string& file) {
  for (const auto& d : diags) std::cerr << pathmark::format_diagnostic(d, file) << "\n";
}

pathmark::Circuit load_netlist_text(const std::string& text, const std::string& label) {
  auto parsed = pathmark::parse_netlist(text);
  if (!parsed.ok()) {
    print_diagnostics(parsed.diagnostics, label);
    throw Failure{kValidation, std::to_string(parsed.diagnostics.size()) + " diagnostic(s) in " + label};
  }
  return std::move(*parsed.circuit);
}

// ---------------------------------------------------------------------------
// check

int cmd_check(const std::string& path) {
  const std::string text = read_file(path);
  const auto parsed = pathmark::parse_netlist(text);
  print_diagnostics(parsed.diagnostics, path);
  if (!parsed.ok()) return kValidation;
  const auto& c = *parsed.circuit;
  std::cout << path << ": ok (" << c.elements.size() << " elements, " << c.eoms().size()
            << " modulators, detect";
  for (const auto& d : c.detects) std::cout << " " << d;
  std::cout << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// scan

struct ScanFlags {
  std::string out = "both";
  bool sweep_phase = false;
};

std::string scan_csv(const pathmark::SpectralScan& scan) {
  std::string s = "detuning_ghz,expected_p,counts\n";
  for (const auto& pt : scan.points) {
    s += num(pt.detuning_ghz) + "," + num(pt.expected_p) + "," + std::to_string(pt.counts) + "\n";
  }
  return s;
}

json peaks_json(const pathmark::PeakReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"eom", e.eom},
                       {"frequency_ghz", e.frequency_ghz},
                       {"assessable", e.assessable},
                       {"line_weight", e.line_weight},
                       {"weight_sigma", e.weight_sigma},
                       {"counts_above_baseline", e.counts_above_baseline},
                       {"baseline", e.baseline},
                       {"significance", e.significance},
                       {"present", e.present}});
  }
  json present = json::array();
  for (const auto& p : r.present()) present.push_back(p);
  return json{{"k_sigma", r.k_sigma},
              {"carrier_weight", r.carrier_weight},
              {"carrier_sigma", r.carrier_sigma},
              {"carrier_significance", r.carrier_significance},
              {"background_counts", r.background_counts},
              {"present", present},
              {"entries", entries}};
}

json scan_json(const pathmark::SpectralScan& scan, const pathmark::PeakReport& peaks) {
  json pts = json::array();
  for (const auto& pt : scan.points) {
    pts.push_back({{"detuning_ghz", pt.detuning_ghz}, {"expected_p", pt.expected_p}, {"counts", pt.counts}});
  }
  json eoms = json::object();
  for (const auto& [id, f] : scan.eoms) eoms[id] = f;
  return json{{"detect", scan.detect},
              {"envelope", {{"shape", pathmark::to_string(scan.envelope.shape)},
                            {"fwhm_mhz", scan.envelope.fwhm_mhz}}},
              {"etalon", {{"linewidth_mhz", scan.etalon.linewidth_mhz}, {"fsr_ghz", scan.etalon.fsr_ghz}}},
              {"photons_per_point", scan.config.photons_per_point},
              {"seed", scan.config.seed},
              {"dark", scan.config.dark_probability},
              {"eoms", eoms},
              {"warnings", scan.warnings},
              {"points", pts},
              {"peaks", peaks_json(peaks)}};
}

// Runs a resolved scenario against its circuit and writes the results.
void execute_scan(const pathmark::Scenario& sc, const pathmark::Circuit& circuit, const ScanFlags& flags,
                  const fs::path& prefix, Run& run) {
  const bool want_csv = flags.out == "csv" || flags.out == "both";
  const bool want_json = flags.out == "json" || flags.out == "both";
  run.seed = sc.scan.seed;
  run.parameters["scenario"] = pathmark::format_scenario(sc);
  run.parameters["netlist"] = pathmark::format_netlist(circuit);
  run.parameters["out"] = flags.out;
  run.parameters["sweep_phase"] = flags.sweep_phase;

  if (flags.sweep_phase) {
    if (sc.config != pathmark::ReferenceConfig::kFig3) {
      throw Failure{kValidation, "--sweep-phase needs a fig3 scenario"};
    }
    const pathmark::PhaseSweep sweep{sc.sweep_points, 2.0 * std::numbers::pi};
    const auto expected = pathmark::visibility(sc.params, sweep, sc.envelope, sc.etalon, sc.scan,
                                               pathmark::CountSource::kExpected);
    const auto counted = pathmark::visibility(sc.params, sweep, sc.envelope, sc.etalon, sc.scan,
                                              pathmark::CountSource::kCounts);
    if (want_csv) {
      std::string s = "phase_rad,expected_p,counts\n";
      for (std::size_t i = 0; i < expected.phases.size(); ++i) {
        s += num(expected.phases[i]) + "," + num(expected.expected_p[i]) + "," +
             std::to_string(expected.counts[i]) + "\n";
      }
      run.output(prefix.string() + ".sweep.csv", s);
    }
    if (want_json) {
      json pts = json::array();
      for (std::size_t i = 0; i < expected.phases.size(); ++i) {
        pts.push_back({{"phase_rad", expected.phases[i]},
                       {"expected_p", expected.expected_p[i]},
                       {"counts", expected.counts[i]}});
      }
      json j{{"sweep", pts},
             {"visibility", {{"expected", expected.value},
                             {"expected_status", pathmark::to_string(expected.status)},
                             {"counts", counted.value},
                             {"counts_status", pathmark::to_string(counted.status)}}}};
      run.output(prefix.string() + ".sweep.json", j.dump(2) + "\n");
    }
    std::cout << "visibility: expected " << num(expected.value) << " (" << pathmark::to_string(expected.status)
              << "), counts " << num(counted.value) << "\n";
    return;
  }

  pathmark::PropagationOptions opts;
  opts.sign = sc.sign;
  const auto scan = pathmark::run_spectrum_scan(circuit, sc.detect, sc.etalon, sc.envelope, sc.scan, opts);
  pathmark::PeakOptions popts;
  popts.k_sigma = sc.k_sigma;
  const auto peaks = pathmark::detect_peaks(scan, popts);
  for (const auto& w : scan.warnings) std::cerr << "warning: " << w << "\n";
  if (want_csv) run.output(prefix.string() + ".csv", scan_csv(scan));
  if (want_json) run.output(prefix.string() + ".json", scan_json(scan, peaks).dump(2) + "\n");
  std::cout << "present:";
  for (const auto& p : peaks.present()) std::cout << " " << p;
  std::cout << "\n";
}

pathmark::Scenario parse_scenario_or_throw(const std::string& text, const std::string& label) {
  auto parsed = pathmark::parse_scenario(text);
  if (!parsed.scenario) {
    for (const auto& e : parsed.errors) std::cerr << label << ": " << pathmark::format_schema_error(e) << "\n";
    throw Failure{kSchema, std::to_string(parsed.errors.size()) + " schema error(s) in " + label};
  }
  return std::move(*parsed.scenario);
}

fs::path output_prefix(const std::string& prefix, const fs::path& input, const std::string& suffix = "") {
  if (!prefix.empty()) return prefix;
  return input.stem().string() + suffix;
}

int cmd_scan(const std::string& path, const ScanFlags& flags, std::optional<std::uint64_t> seed,
             std::optional<double> k_sigma, const std::string& prefix_opt, const std::string& command) {
  const std::string text = read_file(path);
  auto sc = parse_scenario_or_throw(text, path);
  if (seed) sc.scan.seed = *seed;
  if (k_sigma) {
    if (!(*k_sigma > 0.0)) throw Failure{kSchema, "--ksigma must be positive"};
    sc.k_sigma = *k_sigma;
  }
  Run run;
  run.command = command;
  run.input(path, text);
  pathmark::Circuit circuit;
  if (sc.config) {
    circuit = pathmark::build_reference(*sc.config, sc.params);
  } else {
    const fs::path net = fs::path(path).parent_path() / *sc.netlist;
    const std::string net_text = read_file(net);
    run.input(net, net_text);
    circuit = load_netlist_text(net_text, net.string());
  }
  const fs::path prefix = output_prefix(prefix_opt, path);
  execute_scan(sc, circuit, flags, prefix, run);
  run.finish(prefix.string() + ".manifest.json");
  return kOk;
}

// ---------------------------------------------------------------------------
// tsvf

struct TsvfFlags {
  std::string postselect;
  bool epsilon_sweep = false;
  std::string epsilon_element = "inner";
  double sweep_min = 1e-4;
  double sweep_max = 1e-1;
  std::size_t sweep_points = 16;
  double eta = pathmark::kDefaultSupportThreshold;
};

std::vector<pathmark::ProjectorSpec> registered_projectors(const pathmark::Circuit& c,
                                                           const pathmark::TwoStateVector& tsv) {
  std::vector<pathmark::ProjectorSpec> out;
  std::set<std::string> covered;
  for (const auto& eom : c.eoms()) {
    out.push_back(pathmark::eom_projector(c, eom.id));
    covered.insert(eom.wire);
  }
  std::set<std::string> wires;
  for (std::size_t k = 0; k < tsv.cut_count(); ++k) {
    for (const auto& [w, a] : tsv.forward[k]) {
      if (!covered.count(w)) wires.insert(w);
    }
  }
  for (const auto& w : wires) out.push_back(pathmark::ProjectorSpec::on_wire(w));
  return out;
}

json weak_value_json(const pathmark::WeakValueReport& r, const pathmark::TwoStateVector& tsv) {
  json j{{"projector", r.projector.label}, {"cut", r.cut}, {"cut_label", tsv.cut_labels.at(r.cut)}};
  j["divergent"] = r.divergent;
  j["value"] = r.divergent ? json(nullptr) : complex_json(r.value);
  j["numerator"] = complex_json(r.numerator);
  j["overlap"] = complex_json(r.overlap);
  return j;
}

pathmark::Circuit with_phase_offset(pathmark::Circuit c, const std::string& id, double eps) {
  for (auto& e : c.elements) {
    if (auto* ph = std::get_if<pathmark::PhaseShifterSpec>(&e); ph != nullptr && ph->id == id) {
      ph->phi += eps;
      return c;
    }
  }
  throw Failure{kValidation, "no phase element '" + id + "' to sweep"};
}

int cmd_tsvf(const std::string& path, TsvfFlags flags, const std::string& prefix_opt,
             const std::string& command) {
  const std::string text = read_file(path);
  const auto circuit = load_netlist_text(text, path);
  if (flags.postselect.empty()) {
    flags.postselect = circuit.is_detect(pathmark::kReferenceDetect) ? pathmark::kReferenceDetect
                                                                     : circuit.detects.front();
  }
  if (!circuit.is_detect(flags.postselect)) {
    throw Failure{kValidation, "'" + flags.postselect + "' is not a detect wire"};
  }
  Run run;
  run.command = command;
  run.input(path, text);
  run.parameters = {{"postselect", flags.postselect}, {"eta", flags.eta}, {"epsilon_sweep", flags.epsilon_sweep}};

  const auto tsv = pathmark::two_state(circuit, flags.postselect);
  json report;
  report["postselect"] = flags.postselect;
  report["overlap"] = complex_json(tsv.overlap());
  json wv = json::array();
  for (const auto& p : registered_projectors(circuit, tsv)) {
    wv.push_back(weak_value_json(pathmark::weak_value(tsv, circuit, p), tsv));
  }
  report["weak_values"] = wv;
  json wires = json::array();
  for (const auto& w : pathmark::tsvf_trajectory(tsv, flags.eta)) wires.push_back(w);
  json eoms = json::array();
  for (const auto& e : pathmark::tsvf_eom_set(tsv, circuit, flags.eta)) eoms.push_back(e);
  // Modulator labels name the paths when there are any; bare wires otherwise.
  report["trajectory"] = circuit.eoms().empty() ? wires : eoms;
  report["trajectory_wires"] = wires;

  if (flags.epsilon_sweep) {
    if (!(flags.sweep_min > 0.0) || !(flags.sweep_max > flags.sweep_min) || flags.sweep_points < 2) {
      throw Failure{kValidation, "epsilon sweep needs 0 < min < max and >= 2 points"};
    }
    run.parameters["epsilon_element"] = flags.epsilon_element;
    run.parameters["sweep"] = {{"min", flags.sweep_min}, {"max", flags.sweep_max}, {"points", flags.sweep_points}};
    with_phase_offset(circuit, flags.epsilon_element, 0.0);
    const auto grid = pathmark::log_spaced(flags.sweep_min, flags.sweep_max, flags.sweep_points);
    auto family = [&](double eps) { return with_phase_offset(circuit, flags.epsilon_element, eps); };
    json scaling = json::object();
    for (const auto& eom : circuit.eoms()) {
      const auto fit = pathmark::weak_value_scaling(
          family, flags.postselect, [&](const pathmark::Circuit& c) { return pathmark::eom_projector(c, eom.id); },
          grid);
      json j{{"identically_zero", fit.identically_zero}, {"points_used", fit.points_used}};
      j["exponent"] = fit.identically_zero ? json(nullptr) : json(fit.slope);
      j["warnings"] = fit.warnings;
      scaling[eom.id] = j;
    }
    report["scaling"] = scaling;
  }

  const fs::path prefix = output_prefix(prefix_opt, path, ".tsvf");
  const std::string body = report.dump(2) + "\n";
  run.output(prefix.string() + ".json", body);
  run.finish(prefix.string() + ".manifest.json");
  std::cout << body;
  return kOk;
}

// ---------------------------------------------------------------------------
// replay: re-run a scan manifest and compare output digests

int cmd_replay(const std::string& manifest_path, const std::string& dir) {
  const std::string text = read_file(manifest_path);
  json m;
  try {
    m = json::parse(text);
  } catch (const json::exception& e) {
    throw Failure{kSchema, manifest_path + ": " + e.what()};
  }
  if (!m.contains("parameters") || !m["parameters"].contains("scenario") || !m.contains("outputs")) {
    throw Failure{kSchema, manifest_path + ": not a scan manifest"};
  }
  const auto& params = m["parameters"];
  const auto sc = parse_scenario_or_throw(params["scenario"].get<std::string>(), manifest_path);
  const auto circuit = sc.config ? pathmark::build_reference(*sc.config, sc.params)
                                 : load_netlist_text(params["netlist"].get<std::string>(), manifest_path);
  ScanFlags flags;
  flags.out = params.value("out", "both");
  flags.sweep_phase = params.value("sweep_phase", false);

  fs::create_directories(dir);
  std::string stem = m["outputs"].at(0)["path"].get<std::string>();
  for (const char* ext : {".sweep.csv", ".sweep.json", ".csv", ".json"}) {
    const std::string e(ext);
    if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0) {
      stem.resize(stem.size() - e.size());
      break;
    }
  }
  Run run;
  run.command = "replay " + manifest_path;
  execute_scan(sc, circuit, flags, fs::path(dir) / stem, run);
  bool same = run.outputs.size() == m["outputs"].size();
  for (std::size_t i = 0; same && i < run.outputs.size(); ++i) {
    same = run.outputs[i]["sha256"] == m["outputs"][i]["sha256"];
  }
  std::cout << (same ? "replay: identical" : "replay: outputs differ") << "\n";
  return same ? kOk : kValidation;
}

std::string joined(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sideband-lattice simulator for which-path marking with phase modulators"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pathmark::kVersion);

  std::string path;
  std::string prefix;

  auto* check = app.add_subcommand("check", "Parse and validate a netlist");
  check->add_option("netlist", path, "netlist file")->required();

  ScanFlags scan_flags;
  std::optional<std::uint64_t> seed;
  std::optional<double> k_sigma;
  auto* scan = app.add_subcommand("scan", "Run an etalon scan described by a scenario file");
  scan->add_option("scenario", path, "scenario file")->required();
  scan->add_option("--out", scan_flags.out, "output format")->check(CLI::IsMember({"csv", "json", "both"}));
  scan->add_option("--seed", seed, "override scan.seed");
  scan->add_option("--ksigma", k_sigma, "override peaks.ksigma");
  scan->add_flag("--sweep-phase", scan_flags.sweep_phase, "fig3: sweep the arm phase and report visibility");
  scan->add_option("--prefix", prefix, "output path prefix (default: scenario file stem)");

  TsvfFlags tsvf_flags;
  auto* tsvf = app.add_subcommand("tsvf", "Two-state vector analysis of a netlist");
  tsvf->add_option("netlist", path, "netlist file")->required();
  tsvf->add_option("--postselect", tsvf_flags.postselect, "post-selected detect wire (default D or first)");
  tsvf->add_flag("--epsilon-sweep", tsvf_flags.epsilon_sweep, "fit weak-value scaling exponents");
  tsvf->add_option("--epsilon-element", tsvf_flags.epsilon_element, "phase element offset by epsilon");
  tsvf->add_option("--sweep-min", tsvf_flags.sweep_min, "smallest epsilon");
  tsvf->add_option("--sweep-max", tsvf_flags.sweep_max, "largest epsilon");
  tsvf->add_option("--sweep-points", tsvf_flags.sweep_points, "log-spaced epsilon count");
  tsvf->add_option("--eta", tsvf_flags.eta, "support threshold for the trajectory");
  tsvf->add_option("--prefix", prefix, "output path prefix (default: <netlist stem>.tsvf)");

  std::string replay_dir = "replay";
  auto* replay = app.add_subcommand("replay", "Re-run a scan manifest and compare output digests");
  replay->add_option("manifest", path, "manifest file")->required();
  replay->add_option("--dir", replay_dir, "directory for regenerated outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  const std::string command = joined(argc, argv);
  try {
    if (*check) return cmd_check(path);
    if (*scan) return cmd_scan(path, scan_flags, seed, k_sigma, prefix, command);
    if (*tsvf) return cmd_tsvf(path, tsvf_flags, prefix, command);
    if (*replay) return cmd_replay(path, replay_dir);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const pathmark::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
