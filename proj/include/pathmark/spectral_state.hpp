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

// Joint path/frequency state of a single photon.
//
// The photon is held in factored form: a common spectral envelope times a
// sparse set of discrete amplitudes indexed by (wire, sideband vector). A
// sideband vector records, per modulator, the signed harmonic order picked up
// along the way; its frequency shift is the dot product with the modulator
// frequencies. Envelopes are evaluated only when a spectrum is rendered.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pathmark/errors.hpp"

namespace pathmark {

using Complex = std::complex<double>;

// Modulator id -> modulation frequency in GHz.
using EomFrequencies = std::map<std::string, double>;

class SidebandVector {
 public:
  SidebandVector() = default;
  SidebandVector(std::initializer_list<std::pair<const std::string, int>> init) {
    for (const auto& [id, order] : init) add(id, order);
  }

  int order(const std::string& eom) const {
    auto it = orders_.find(eom);
    return it == orders_.end() ? 0 : it->second;
  }

  // Adds `delta` to the harmonic order of `eom`; zero entries are erased so
  // equality is structural.
  void add(const std::string& eom, int delta) {
    if (delta == 0) return;
    int& slot = orders_[eom];
    slot += delta;
    if (slot == 0) orders_.erase(eom);
  }

  bool is_carrier() const { return orders_.empty(); }
  const std::map<std::string, int>& entries() const { return orders_; }

  auto operator<=>(const SidebandVector&) const = default;
  bool operator==(const SidebandVector&) const = default;

 private:
  std::map<std::string, int> orders_;
};

inline std::string to_string(const SidebandVector& v) {
  if (v.is_carrier()) return "0";
  std::string out;
  for (const auto& [id, n] : v.entries()) {
    if (!out.empty()) out += ",";
    out += id + ":" + (n > 0 ? "+" : "") + std::to_string(n);
  }
  return out;
}

// Sum of n_i * Omega_i in GHz.
inline double total_shift(const SidebandVector& v, const EomFrequencies& freqs) {
  double shift = 0.0;
  for (const auto& [id, n] : v.entries()) {
    auto it = freqs.find(id);
    if (it == freqs.end()) {
      throw ConfigError("sideband vector references unknown EOM '" + id + "'");
    }
    shift += n * it->second;
  }
  return shift;
}

struct Mode {
  std::string wire;
  SidebandVector sidebands;

  auto operator<=>(const Mode&) const = default;
  bool operator==(const Mode&) const = default;
};

inline constexpr double kDefaultPruneThreshold = 1e-15;
inline constexpr double kDefaultCarrierGhz = 340696.55;

class PhotonState {
 public:
  PhotonState() = default;
  explicit PhotonState(double carrier_ghz) : carrier_ghz_(carrier_ghz) {}

  // A photon with unit amplitude on `wire` at the carrier.
  static PhotonState single(const std::string& wire,
                            double carrier_ghz = kDefaultCarrierGhz) {
    PhotonState s(carrier_ghz);
    s.set(Mode{wire, {}}, 1.0);
    return s;
  }

  Complex amplitude(const Mode& mode) const {
    auto it = amps_.find(mode);
    return it == amps_.end() ? Complex{} : it->second;
  }

  void set(const Mode& mode, Complex a) {
    if (std::abs(a) < prune_threshold_) {
      amps_.erase(mode);
    } else {
      amps_[mode] = a;
    }
  }

  void accumulate(const Mode& mode, Complex a) { amps_[mode] += a; }

  // Drops entries below the prune threshold.
  void prune() {
    std::erase_if(amps_, [this](const auto& kv) {
      return std::abs(kv.second) < prune_threshold_;
    });
  }

  // Removes and returns every mode on `wire`, keyed by sideband vector.
  std::map<SidebandVector, Complex> take_wire(const std::string& wire) {
    std::map<SidebandVector, Complex> out;
    for (auto it = amps_.begin(); it != amps_.end();) {
      if (it->first.wire == wire) {
        out.emplace(it->first.sidebands, it->second);
        it = amps_.erase(it);
      } else {
        ++it;
      }
    }
    return out;
  }

  bool has_wire(const std::string& wire) const {
    for (const auto& [mode, a] : amps_) {
      if (mode.wire == wire) return true;
    }
    return false;
  }

  PhotonState restricted_to(const std::string& wire) const {
    PhotonState out(carrier_ghz_);
    out.prune_threshold_ = prune_threshold_;
    for (const auto& [mode, a] : amps_) {
      if (mode.wire == wire) out.amps_.emplace(mode, a);
    }
    return out;
  }

  const std::map<Mode, Complex>& amplitudes() const { return amps_; }
  bool empty() const { return amps_.empty(); }
  std::size_t size() const { return amps_.size(); }

  double carrier_ghz() const { return carrier_ghz_; }
  double prune_threshold() const { return prune_threshold_; }
  void set_prune_threshold(double t) { prune_threshold_ = t; }

  // Exact equality of the stored amplitudes and the carrier label.
  bool operator==(const PhotonState& o) const {
    return amps_ == o.amps_ && carrier_ghz_ == o.carrier_ghz_;
  }

 private:
  std::map<Mode, Complex> amps_;
  double carrier_ghz_ = kDefaultCarrierGhz;
  double prune_threshold_ = kDefaultPruneThreshold;
};

// Sideband vectors are orthogonal modes, so this is a plain sum of |a|^2.
inline double norm_squared(const PhotonState& s) {
  double total = 0.0;
  for (const auto& [mode, a] : s.amplitudes()) total += std::norm(a);
  return total;
}

inline double norm_squared(const PhotonState& s, const std::string& wire) {
  double total = 0.0;
  for (const auto& [mode, a] : s.amplitudes()) {
    if (mode.wire == wire) total += std::norm(a);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Spectral lines

// One spectral line: the coherent sum of every sideband vector on a wire that
// lands on the same total shift.
struct SpectralLine {
  double shift_ghz = 0.0;
  Complex amplitude;
};

// Shifts closer than this are the same line (e.g. 2.8 + 1.6 - 3.4 vs 1.0).
inline constexpr double kLineMergeGhz = 1e-9;

inline std::vector<SpectralLine> spectral_lines(const PhotonState& s,
                                                const std::string& wire,
                                                const EomFrequencies& freqs) {
  std::map<std::int64_t, SpectralLine> by_key;
  for (const auto& [mode, a] : s.amplitudes()) {
    if (mode.wire != wire) continue;
    const double shift = total_shift(mode.sidebands, freqs);
    const auto key = static_cast<std::int64_t>(std::llround(shift / kLineMergeGhz));
    auto& line = by_key[key];
    line.shift_ghz = key * kLineMergeGhz;
    line.amplitude += a;
  }
  std::vector<SpectralLine> lines;
  lines.reserve(by_key.size());
  for (auto& [key, line] : by_key) lines.push_back(line);
  return lines;
}

// Amplitude of the line at `shift_ghz`, zero if none.
inline Complex line_amplitude(const std::vector<SpectralLine>& lines,
                              double shift_ghz) {
  for (const auto& line : lines) {
    if (std::abs(line.shift_ghz - shift_ghz) < 1e3 * kLineMergeGhz) {
      return line.amplitude;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Envelope and rendering

enum class EnvelopeShape { kLorentzian, kGaussian };

inline constexpr double kDefaultPhotonFwhmMhz = 315.0;

struct SpectralEnvelope {
  EnvelopeShape shape = EnvelopeShape::kGaussian;
  double fwhm_mhz = kDefaultPhotonFwhmMhz;
  double center_ghz = 0.0;

  double fwhm_ghz() const { return fwhm_mhz * 1e-3; }

  void validate() const {
    if (!(fwhm_mhz > 0.0)) throw ConfigError("envelope fwhm must be positive");
  }

  // L2-normalized amplitude at detuning `delta` (GHz). The Lorentzian is the
  // causal single-pole form, |E|^2 = (G/2pi) / (d^2 + (G/2)^2); the Gaussian
  // is real with |E|^2 a normal density of the given FWHM.
  Complex amplitude(double delta_ghz) const {
    const double d = delta_ghz - center_ghz;
    const double g = fwhm_ghz();
    if (shape == EnvelopeShape::kLorentzian) {
      return std::sqrt(g / (2.0 * std::numbers::pi)) / Complex(g / 2.0, -d);
    }
    const double sigma = g / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    return std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25) *
           std::exp(-d * d / (4.0 * sigma * sigma));
  }

  double density(double delta_ghz) const { return std::norm(amplitude(delta_ghz)); }
};

inline const char* to_string(EnvelopeShape s) {
  return s == EnvelopeShape::kLorentzian ? "lorentzian" : "gaussian";
}

// Uniform detuning grid: start + i * step for i in [0, count).
struct SpectralGrid {
  double start_ghz = 0.0;
  double step_ghz = 0.0;
  std::size_t count = 0;

  static SpectralGrid range(double start, double stop, double step) {
    if (!(step > 0.0) || stop < start) {
      throw ConfigError("spectral grid needs step > 0 and stop >= start");
    }
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    return {start, step, n};
  }

  double at(std::size_t i) const { return start_ghz + static_cast<double>(i) * step_ghz; }
  double stop_ghz() const { return at(count == 0 ? 0 : count - 1); }
};

struct SpectralDensity {
  SpectralGrid grid;
  std::vector<double> values;  // per GHz
  Warnings warnings;

  // Trapezoidal integral.
  double integral() const {
    if (values.size() < 2) return 0.0;
    double total = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) total += values[i];
    return total * grid.step_ghz;
  }
};

// |sum_v a_v E(d - shift(v))|^2 on `wire`. Components with coincident shifts
// interfere.
inline SpectralDensity render_spectrum(const PhotonState& s, const std::string& wire,
                                       const SpectralEnvelope& env,
                                       const SpectralGrid& grid,
                                       const EomFrequencies& freqs) {
  env.validate();
  SpectralDensity out;
  out.grid = grid;
  out.values.assign(grid.count, 0.0);
  if (grid.step_ghz > env.fwhm_ghz() / 10.0) {
    out.warnings.push_back("grid step exceeds envelope fwhm/10; peaks are undersampled");
  }
  const auto lines = spectral_lines(s, wire, freqs);
  if (lines.empty()) return out;
  for (std::size_t i = 0; i < grid.count; ++i) {
    const double d = grid.at(i);
    Complex sum;
    for (const auto& line : lines) sum += line.amplitude * env.amplitude(d - line.shift_ghz);
    out.values[i] = std::norm(sum);
  }
  return out;
}

}  // namespace pathmark
