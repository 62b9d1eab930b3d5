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

// Brute-force time-domain reference for the sideband lattice.
//
// The photon envelope is synthesized on a periodic time window, every
// modulator multiplies its wire by the exact phase exp(-i m sin(2 pi Omega t))
// (no harmonic expansion), splitters/phases/blocks act sample by sample, and
// the detect wires are transformed back to a dense frequency grid. Requires
// FFTW3 (link with -lfftw3).

#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pathmark/elements.hpp"
#include "pathmark/errors.hpp"
#include "pathmark/netlist.hpp"
#include "pathmark/spectral_state.hpp"

namespace pathmark::oracle {

struct TimeDomainConfig {
  double window_ns = 80.0;
  std::size_t samples = 16384;  // power of two
  SpectralEnvelope envelope;
  SidebandSign sign = SidebandSign::kPositive;

  double df_ghz() const { return 1.0 / window_ns; }
  double nyquist_ghz() const { return 0.5 * static_cast<double>(samples) * df_ghz(); }
  // DFT grid in centred order: k = -samples/2 .. samples/2 - 1.
  SpectralGrid grid() const {
    return {-nyquist_ghz(), df_ghz(), samples};
  }
};

struct OracleResult {
  std::map<std::string, SpectralDensity> spectra;  // per detect wire
  std::map<std::string, double> time_norm;         // sum |x|^2 dt per detect wire
  std::optional<std::string> refusal;

  bool ok() const { return !refusal.has_value(); }
};

// Largest |total shift| the truncated lattice can reach.
inline double max_lattice_shift(const Circuit& c) {
  double total = 0.0;
  for (const auto& eom : c.eoms()) {
    if (eom.depth > 0.0) total += eom.order * eom.omega_ghz;
  }
  return total;
}

namespace detail {

struct FftPlan {
  FftPlan(std::size_t n, int direction) : n_(n) {
    buf_ = fftw_alloc_complex(n);
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, direction, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void run(std::vector<Complex>& data) {
    std::copy(data.begin(), data.end(), reinterpret_cast<Complex*>(buf_));
    fftw_execute(plan_);
    std::copy_n(reinterpret_cast<Complex*>(buf_), n_, data.begin());
  }

 private:
  std::size_t n_;
  fftw_complex* buf_;
  fftw_plan plan_;
};

}  // namespace detail

// Refuses (with a reason) when the window or sampling cannot represent the
// circuit's spectrum without aliasing.
inline std::optional<std::string> check_config(const Circuit& c, const TimeDomainConfig& cfg) {
  const std::size_t n = cfg.samples;
  if (n < 2 || (n & (n - 1)) != 0) return "sample count must be a power of two";
  cfg.envelope.validate();
  const double fwhm = cfg.envelope.fwhm_ghz();
  if (cfg.window_ns < 20.0 / fwhm) return "window shorter than 20 coherence times";
  if (cfg.nyquist_ghz() <= max_lattice_shift(c) + std::abs(cfg.envelope.center_ghz) + 5.0 * fwhm) {
    return "Nyquist frequency below maximum sideband shift + 5 fwhm";
  }
  for (const auto& eom : c.eoms()) {
    const double cycles = eom.omega_ghz * cfg.window_ns;
    if (std::abs(cycles - std::round(cycles)) > 1e-9) {
      return "modulation of EOM '" + eom.id + "' is not periodic on the window";
    }
  }
  return std::nullopt;
}

inline OracleResult time_domain_propagate(const Circuit& c, const TimeDomainConfig& cfg) {
  require_valid(c);
  OracleResult result;
  if (auto why = check_config(c, cfg)) {
    result.refusal = *why;
    return result;
  }
  const std::size_t n = cfg.samples;
  const double df = cfg.df_ghz();
  const double dt = cfg.window_ns / static_cast<double>(n);
  const auto grid = cfg.grid();

  // Envelope samples in FFT order (index k <-> frequency k*df, wrapped).
  std::vector<Complex> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (i + n / 2) % n;  // centred index i -> FFT slot k
    spectrum[k] = cfg.envelope.amplitude(grid.at(i));
  }
  // x_j = df * sum_k E_k exp(+2 pi i jk/N): component exp(+i 2 pi f t) is +f.
  detail::FftPlan backward(n, FFTW_BACKWARD);
  backward.run(spectrum);
  for (auto& v : spectrum) v *= df;

  std::map<std::string, std::vector<Complex>> wires;
  wires.emplace(c.source, std::move(spectrum));
  const double sign = cfg.sign == SidebandSign::kPositive ? -1.0 : 1.0;
  auto take = [&](const std::string& w) {
    auto it = wires.find(w);
    if (it == wires.end()) return std::vector<Complex>(n);
    auto v = std::move(it->second);
    wires.erase(it);
    return v;
  };

  for (const auto& e : c.elements) {
    std::visit([&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, BeamSplitterSpec>) {
        const double rr = std::sqrt(s.reflectivity);
        const Complex it(0.0, std::sqrt(1.0 - s.reflectivity));
        auto a1 = take(s.in[0]);
        auto a2 = s.in.size() == 2 ? take(s.in[1]) : std::vector<Complex>(n);
        std::vector<Complex> o1(n), o2(n);
        for (std::size_t j = 0; j < n; ++j) {
          o1[j] = rr * a1[j] + it * a2[j];
          o2[j] = it * a1[j] + rr * a2[j];
        }
        wires[s.out[0]] = std::move(o1);
        wires[s.out[1]] = std::move(o2);
      } else if constexpr (std::is_same_v<T, PhaseShifterSpec>) {
        const Complex f = std::polar(1.0, s.phi);
        for (auto& v : wires[s.wire]) v *= f;
      } else if constexpr (std::is_same_v<T, EomSpec>) {
        auto& x = wires[s.wire];
        if (x.empty()) x.assign(n, Complex{});
        for (std::size_t j = 0; j < n; ++j) {
          const double t = static_cast<double>(j) * dt;
          x[j] *= std::polar(1.0, sign * s.depth * std::sin(2.0 * std::numbers::pi * s.omega_ghz * t));
        }
      } else {
        wires[s.wire].assign(n, Complex{});
      }
    }, e);
  }

  detail::FftPlan forward(n, FFTW_FORWARD);
  for (const auto& d : c.detects) {
    auto x = take(d);
    double tnorm = 0.0;
    for (const auto& v : x) tnorm += std::norm(v);
    result.time_norm[d] = tnorm * dt;
    forward.run(x);
    SpectralDensity density;
    density.grid = grid;
    density.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      density.values[i] = std::norm(x[(i + n / 2) % n] * dt);
    }
    result.spectra.emplace(d, std::move(density));
  }
  return result;
}

// Frequency-domain norm on the DFT grid (rectangle rule, exact for Parseval).
inline double dft_norm(const SpectralDensity& s) {
  double total = 0.0;
  for (double v : s.values) total += v;
  return total * s.grid.step_ghz;
}

// Restricts a density to |detuning| <= limit.
inline SpectralDensity restrict_to(const SpectralDensity& s, double limit_ghz) {
  SpectralDensity out;
  std::size_t first = s.grid.count, last = 0;
  for (std::size_t i = 0; i < s.grid.count; ++i) {
    if (std::abs(s.grid.at(i)) <= limit_ghz + 1e-12) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first > last) return out;
  out.grid = {s.grid.at(first), s.grid.step_ghz, last - first + 1};
  out.values.assign(s.values.begin() + static_cast<std::ptrdiff_t>(first),
                    s.values.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return out;
}

namespace detail {

inline double interpolate(const SpectralDensity& s, double x) {
  const double pos = (x - s.grid.start_ghz) / s.grid.step_ghz;
  const auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0,
                                                     static_cast<double>(s.grid.count - 1)));
  if (i + 1 >= s.grid.count) return s.values[i];
  const double f = pos - static_cast<double>(i);
  return (1.0 - f) * s.values[i] + f * s.values[i + 1];
}

}  // namespace detail

// Max over grid points where max(a,b) > floor of |a-b| / max(a,b). Grids
// that differ are resampled onto the coarser step over their overlap.
inline double compare(const SpectralDensity& a, const SpectralDensity& b, double floor) {
  if (a.values.empty() || b.values.empty()) throw ConfigError("compare: empty density");
  const bool same = a.grid.count == b.grid.count &&
                    std::abs(a.grid.start_ghz - b.grid.start_ghz) < 1e-12 &&
                    std::abs(a.grid.step_ghz - b.grid.step_ghz) < 1e-15;
  auto rel = [floor](double x, double y) {
    const double m = std::max(x, y);
    return m > floor ? std::abs(x - y) / m : 0.0;
  };
  double worst = 0.0;
  if (same) {
    for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, rel(a.values[i], b.values[i]));
    return worst;
  }
  const double lo = std::max(a.grid.start_ghz, b.grid.start_ghz);
  const double hi = std::min(a.grid.stop_ghz(), b.grid.stop_ghz());
  if (hi < lo) throw ConfigError("compare: disjoint grids");
  const double step = std::max(a.grid.step_ghz, b.grid.step_ghz);
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    worst = std::max(worst, rel(detail::interpolate(a, x), detail::interpolate(b, x)));
  }
  return worst;
}

}  // namespace pathmark::oracle
