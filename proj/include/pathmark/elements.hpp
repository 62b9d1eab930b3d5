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

// Actions of the individual optical elements on a PhotonState.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "pathmark/errors.hpp"
#include "pathmark/spectral_state.hpp"

namespace pathmark {

struct BeamSplitterSpec {
  std::string id;
  std::vector<std::string> in;   // one or two wires; a missing second input is vacuum
  std::vector<std::string> out;  // exactly two wires
  double reflectivity = 0.5;     // power reflectivity into out[0]

  bool operator==(const BeamSplitterSpec&) const = default;
};

inline constexpr int kDefaultEomOrder = 3;

struct EomSpec {
  std::string id;
  std::string wire;
  double omega_ghz = 1.0;
  double depth = 0.0;  // m = omega * g at the carrier
  int order = kDefaultEomOrder;

  bool operator==(const EomSpec&) const = default;
};

struct PhaseShifterSpec {
  std::string id;
  std::string wire;
  double phi = 0.0;  // radians

  bool operator==(const PhaseShifterSpec&) const = default;
};

struct BlockSpec {
  std::string id;
  std::string wire;

  bool operator==(const BlockSpec&) const = default;
};

inline constexpr double kDefaultEtalonLinewidthMhz = 100.0;
inline constexpr double kDefaultEtalonFsrGhz = 8.0;

struct EtalonSpec {
  double linewidth_mhz = kDefaultEtalonLinewidthMhz;
  double fsr_ghz = kDefaultEtalonFsrGhz;
  double setting_ghz = 0.0;

  double linewidth_ghz() const { return linewidth_mhz * 1e-3; }

  void validate() const {
    if (!(linewidth_mhz > 0.0) || !(fsr_ghz > 0.0) || linewidth_ghz() >= fsr_ghz) {
      throw ConfigError("etalon needs 0 < linewidth < fsr");
    }
  }
};

// Which way a positive harmonic order moves the frequency. kPositive means
// order n shifts by +n*Omega with coefficient (-1)^n J_n(m).
enum class SidebandSign { kPositive, kNegative };

struct PropagationOptions {
  SidebandSign sign = SidebandSign::kPositive;
  double prune_threshold = kDefaultPruneThreshold;
};

// ---------------------------------------------------------------------------
// Bessel coefficients

// 1 - sum_{|n|<=order} J_n(m)^2, the power lost by truncating the expansion.
inline double bessel_truncation_defect(double m, int order) {
  double kept = 0.0;
  for (int n = -order; n <= order; ++n) {
    const double j = std::cyl_bessel_j(std::abs(n), m);
    kept += j * j;
  }
  return 1.0 - kept;
}

// Smallest order whose dropped tail 2 * sum_{n>order} J_n(m)^2 is below `tol`.
// Evaluated from the tail directly; 1 - kept cancels catastrophically.
inline int bessel_order_for(double m, double tol) {
  for (int order = 1; order < 64; ++order) {
    double tail = 0.0;
    for (int n = order + 1; n < order + 40; ++n) {
      const double j = std::cyl_bessel_j(n, m);
      tail += 2.0 * j * j;
    }
    if (tail < tol) return order;
  }
  return 64;
}

// Coefficients c_n for n = -order..order (index n + order) of
// exp(-i m sin(Omega t)) = sum_n (-1)^n J_n(m) exp(i n Omega t), renormalized
// so the truncated set has unit norm.
inline std::vector<double> eom_coefficients(double m, int order) {
  std::vector<double> c(2 * order + 1);
  double norm = 0.0;
  for (int n = -order; n <= order; ++n) {
    // J_{-n} = (-1)^n J_n, so the coefficient is J_|n| for n < 0.
    const double jn = std::cyl_bessel_j(std::abs(n), m);
    c[n + order] = (n > 0 && n % 2 == 1) ? -jn : jn;
    norm += jn * jn;
  }
  const double scale = 1.0 / std::sqrt(norm);
  for (double& v : c) v *= scale;
  return c;
}

// ---------------------------------------------------------------------------
// Element actions

inline void check_beam_splitter(const BeamSplitterSpec& spec) {
  if (!(spec.reflectivity >= 0.0 && spec.reflectivity <= 1.0)) {
    throw ConfigError("beam splitter " + spec.id + ": reflectivity outside [0,1]");
  }
  if (spec.in.empty() || spec.in.size() > 2 || spec.out.size() != 2) {
    throw ConfigError("beam splitter " + spec.id + ": needs 1-2 inputs and 2 outputs");
  }
}

// out1 = sqrt(r) in1 + i sqrt(1-r) in2, out2 = i sqrt(1-r) in1 + sqrt(r) in2,
// applied to each sideband vector independently.
inline PhotonState apply_beam_splitter(PhotonState s, const BeamSplitterSpec& spec) {
  check_beam_splitter(spec);
  for (const auto& w : spec.out) {
    const bool is_input = std::find(spec.in.begin(), spec.in.end(), w) != spec.in.end();
    if (!is_input && s.has_wire(w)) {
      throw ConfigError("beam splitter " + spec.id + ": output wire '" + w +
                        "' is already populated");
    }
  }
  const double rr = std::sqrt(spec.reflectivity);
  const Complex it(0.0, std::sqrt(1.0 - spec.reflectivity));
  auto in1 = s.take_wire(spec.in[0]);
  std::map<SidebandVector, Complex> in2;
  if (spec.in.size() == 2) in2 = s.take_wire(spec.in[1]);

  auto emit = [&](const SidebandVector& v, Complex a1, Complex a2) {
    s.set(Mode{spec.out[0], v}, rr * a1 + it * a2);
    s.set(Mode{spec.out[1], v}, it * a1 + rr * a2);
  };
  for (const auto& [v, a1] : in1) {
    auto j = in2.find(v);
    Complex a2;
    if (j != in2.end()) {
      a2 = j->second;
      in2.erase(j);
    }
    emit(v, a1, a2);
  }
  for (const auto& [v, a2] : in2) emit(v, {}, a2);
  return s;
}

// Replaces each amplitude a at vector v on the wire by sum_n c_n a at v + n*e_id.
inline PhotonState apply_eom(PhotonState s, const EomSpec& spec,
                             const PropagationOptions& opts = {}) {
  if (!(spec.omega_ghz > 0.0) || !(spec.depth >= 0.0 && spec.depth < 1.0) ||
      spec.order < 1) {
    throw ConfigError("EOM " + spec.id + ": needs omega > 0, 0 <= depth < 1, order >= 1");
  }
  if (spec.depth == 0.0) return s;
  const auto coeffs = eom_coefficients(spec.depth, spec.order);
  const int step = opts.sign == SidebandSign::kPositive ? 1 : -1;
  auto modes = s.take_wire(spec.wire);
  for (const auto& [v, a] : modes) {
    for (int n = -spec.order; n <= spec.order; ++n) {
      SidebandVector shifted = v;
      shifted.add(spec.id, step * n);
      s.accumulate(Mode{spec.wire, shifted}, coeffs[n + spec.order] * a);
    }
  }
  s.prune();
  return s;
}

inline PhotonState apply_phase(PhotonState s, const PhaseShifterSpec& spec) {
  const Complex factor = std::polar(1.0, spec.phi);
  auto modes = s.take_wire(spec.wire);
  for (const auto& [v, a] : modes) s.set(Mode{spec.wire, v}, factor * a);
  return s;
}

// Non-unitary: everything on the wire is absorbed.
inline PhotonState apply_block(PhotonState s, const BlockSpec& spec) {
  s.take_wire(spec.wire);
  return s;
}

// Single Lorentzian resonance per free spectral range; detunings further than
// fsr/2 from the setting are folded onto the nearest replica.
inline double etalon_transmission(double delta_ghz, const EtalonSpec& spec,
                                  Warnings* warnings = nullptr) {
  double d = delta_ghz - spec.setting_ghz;
  if (std::abs(d) >= spec.fsr_ghz / 2.0) {
    warn(warnings, "detuning outside one free spectral range; using nearest replica");
    d -= spec.fsr_ghz * std::round(d / spec.fsr_ghz);
  }
  const double half = spec.linewidth_ghz() / 2.0;
  return half * half / (d * d + half * half);
}

}  // namespace pathmark
