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

// Scenario files: flat `key = value` lines, '#' comments. See
// docs/formats.md for the full key list.

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pathmark/elements.hpp"
#include "pathmark/experiments.hpp"
#include "pathmark/netlist.hpp"
#include "pathmark/spectral_state.hpp"

namespace pathmark {

struct Scenario {
  std::optional<ReferenceConfig> config;
  std::optional<std::string> netlist;  // path, relative to the scenario file
  std::string detect = kReferenceDetect;
  ReferenceParams params;
  SpectralEnvelope envelope;
  EtalonSpec etalon;
  ScanConfig scan;
  double k_sigma = kDefaultKSigma;
  std::size_t sweep_points = 16;
  SidebandSign sign = SidebandSign::kPositive;
};

struct SchemaError {
  std::string key;  // key path, e.g. "scan.step_ghz"
  int line = 0;
  std::string message;
};

struct ScenarioParse {
  std::optional<Scenario> scenario;
  std::vector<SchemaError> errors;
};

inline std::string format_schema_error(const SchemaError& e) {
  std::ostringstream os;
  if (e.line > 0) os << "line " << e.line << ": ";
  os << e.key << ": " << e.message;
  return os.str();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline ScenarioParse parse_scenario(std::string_view text) {
  ScenarioParse out;
  Scenario sc;
  auto& errors = out.errors;
  int line_no = 0;
  std::map<std::string, int> seen;

  using Setter = std::function<bool(std::string_view, std::string&)>;
  auto real = [](double& slot, bool positive = false) -> Setter {
    return [&slot, positive](std::string_view v, std::string& why) {
      auto d = detail::to_double(v);
      if (!d || !std::isfinite(*d)) {
        why = "expected a number";
        return false;
      }
      if (positive && !(*d > 0.0)) {
        why = "must be positive";
        return false;
      }
      slot = *d;
      return true;
    };
  };
  auto count = [](auto& slot, long long min_value) -> Setter {
    return [&slot, min_value](std::string_view v, std::string& why) {
      long long n = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      if (ec != std::errc() || ptr != v.data() + v.size() || n < min_value) {
        why = "expected an integer >= " + std::to_string(min_value);
        return false;
      }
      slot = static_cast<std::remove_reference_t<decltype(slot)>>(n);
      return true;
    };
  };
  double lower_depth = -1.0;
  std::map<std::string, Setter> keys{
      {"config", [&](std::string_view v, std::string& why) {
         sc.config = parse_reference_config(v);
         if (!sc.config) why = "expected one of a, b, c, fig3";
         return sc.config.has_value();
       }},
      {"netlist", [&](std::string_view v, std::string& why) {
         if (v.empty()) {
           why = "empty path";
           return false;
         }
         sc.netlist = std::string(v);
         return true;
       }},
      {"detect", [&](std::string_view v, std::string& why) {
         if (!detail::valid_name(v)) {
           why = "bad wire name";
           return false;
         }
         sc.detect = std::string(v);
         return true;
       }},
      {"depth", real(sc.params.depth)},
      {"epsilon", real(sc.params.epsilon)},
      {"outer_phase", real(sc.params.outer_phase)},
      {"pzt_phase", real(sc.params.pzt_phase)},
      {"order", count(sc.params.order, 1)},
      {"fig3.split", real(sc.params.fig3_split)},
      {"fig3.lower_depth", real(lower_depth)},
      {"sideband_sign", [&](std::string_view v, std::string& why) {
         if (v == "positive") sc.sign = SidebandSign::kPositive;
         else if (v == "negative") sc.sign = SidebandSign::kNegative;
         else {
           why = "expected positive or negative";
           return false;
         }
         return true;
       }},
      {"envelope.shape", [&](std::string_view v, std::string& why) {
         if (v == "gaussian") sc.envelope.shape = EnvelopeShape::kGaussian;
         else if (v == "lorentzian") sc.envelope.shape = EnvelopeShape::kLorentzian;
         else {
           why = "expected gaussian or lorentzian";
           return false;
         }
         return true;
       }},
      {"envelope.fwhm_mhz", real(sc.envelope.fwhm_mhz, true)},
      {"etalon.linewidth_mhz", real(sc.etalon.linewidth_mhz, true)},
      {"etalon.fsr_ghz", real(sc.etalon.fsr_ghz, true)},
      {"scan.start_ghz", real(sc.scan.start_ghz)},
      {"scan.stop_ghz", real(sc.scan.stop_ghz)},
      {"scan.step_ghz", real(sc.scan.step_ghz, true)},
      {"scan.photons", real(sc.scan.photons_per_point, true)},
      {"scan.seed", count(sc.scan.seed, 0)},
      {"scan.dark", real(sc.scan.dark_probability)},
      {"peaks.ksigma", real(sc.k_sigma, true)},
      {"sweep.points", count(sc.sweep_points, 8)},
  };

  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back({std::string(line), line_no, "expected key = value"});
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end()) {
      errors.push_back({key, line_no, "unknown key"});
      continue;
    }
    if (auto [pos, inserted] = seen.emplace(key, line_no); !inserted) {
      errors.push_back({key, line_no, "duplicate key (first on line " + std::to_string(pos->second) + ")"});
      continue;
    }
    std::string why;
    if (!it->second(value, why)) errors.push_back({key, line_no, why});
  }

  if (sc.config.has_value() == sc.netlist.has_value()) {
    errors.push_back({"config", 0, "exactly one of config or netlist is required"});
  }
  if (lower_depth >= 0.0) sc.params.fig3_lower_depth = lower_depth;
  if (!(sc.params.depth >= 0.0 && sc.params.depth < 1.0)) {
    errors.push_back({"depth", seen.count("depth") ? seen["depth"] : 0, "must lie in [0,1)"});
  }
  if (!(sc.params.fig3_split >= 0.0 && sc.params.fig3_split <= 1.0)) {
    errors.push_back({"fig3.split", seen["fig3.split"], "must lie in [0,1]"});
  }
  if (sc.scan.stop_ghz < sc.scan.start_ghz) {
    errors.push_back({"scan.stop_ghz", seen["scan.stop_ghz"], "must be >= scan.start_ghz"});
  }
  if (!(sc.scan.dark_probability >= 0.0 && sc.scan.dark_probability <= 1.0)) {
    errors.push_back({"scan.dark", seen["scan.dark"], "must lie in [0,1]"});
  }
  if (sc.etalon.linewidth_ghz() >= sc.etalon.fsr_ghz) {
    errors.push_back({"etalon.linewidth_mhz", seen["etalon.linewidth_mhz"], "must be below the free spectral range"});
  }
  if (errors.empty()) out.scenario = std::move(sc);
  return out;
}

// Canonical form with every key resolved; parse_scenario of it reproduces the
// same run.
inline std::string format_scenario(const Scenario& sc) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  if (sc.config) os << "config = " << to_string(*sc.config) << "\n";
  if (sc.netlist) os << "netlist = " << *sc.netlist << "\n";
  os << "detect = " << sc.detect << "\n"
     << "depth = " << num(sc.params.depth) << "\n"
     << "epsilon = " << num(sc.params.epsilon) << "\n"
     << "outer_phase = " << num(sc.params.outer_phase) << "\n"
     << "pzt_phase = " << num(sc.params.pzt_phase) << "\n"
     << "order = " << sc.params.order << "\n"
     << "fig3.split = " << num(sc.params.fig3_split) << "\n";
  if (sc.params.fig3_lower_depth) os << "fig3.lower_depth = " << num(*sc.params.fig3_lower_depth) << "\n";
  os << "sideband_sign = " << (sc.sign == SidebandSign::kPositive ? "positive" : "negative") << "\n"
     << "envelope.shape = " << to_string(sc.envelope.shape) << "\n"
     << "envelope.fwhm_mhz = " << num(sc.envelope.fwhm_mhz) << "\n"
     << "etalon.linewidth_mhz = " << num(sc.etalon.linewidth_mhz) << "\n"
     << "etalon.fsr_ghz = " << num(sc.etalon.fsr_ghz) << "\n"
     << "scan.start_ghz = " << num(sc.scan.start_ghz) << "\n"
     << "scan.stop_ghz = " << num(sc.scan.stop_ghz) << "\n"
     << "scan.step_ghz = " << num(sc.scan.step_ghz) << "\n"
     << "scan.photons = " << num(sc.scan.photons_per_point) << "\n"
     << "scan.seed = " << sc.scan.seed << "\n"
     << "scan.dark = " << num(sc.scan.dark_probability) << "\n"
     << "peaks.ksigma = " << num(sc.k_sigma) << "\n"
     << "sweep.points = " << sc.sweep_points << "\n";
  return os.str();
}

}  // namespace pathmark
