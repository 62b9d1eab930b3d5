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

// Reference scenarios, etalon scans, photon counting and the operational
// trajectory read off the detected spectrum.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathmark/elements.hpp"
#include "pathmark/errors.hpp"
#include "pathmark/netlist.hpp"
#include "pathmark/spectral_state.hpp"
#include "pathmark/tsvf.hpp"

namespace pathmark {

// ---------------------------------------------------------------------------
// Reference circuits

enum class ReferenceConfig { kA, kB, kC, kFig3 };

inline const char* to_string(ReferenceConfig c) {
  switch (c) {
    case ReferenceConfig::kA: return "a";
    case ReferenceConfig::kB: return "b";
    case ReferenceConfig::kC: return "c";
    case ReferenceConfig::kFig3: return "fig3";
  }
  return "?";
}

inline std::optional<ReferenceConfig> parse_reference_config(std::string_view s) {
  if (s == "a") return ReferenceConfig::kA;
  if (s == "b") return ReferenceConfig::kB;
  if (s == "c") return ReferenceConfig::kC;
  if (s == "fig3") return ReferenceConfig::kFig3;
  return std::nullopt;
}

// Modulation frequencies of the nested interferometer, GHz.
inline constexpr double kOmegaA = 2.8;
inline constexpr double kOmegaB = 1.6;
inline constexpr double kOmegaC = 2.1;
inline constexpr double kOmegaE = 1.0;
inline constexpr double kOmegaF = 3.4;
inline constexpr double kDefaultDepth = 0.025;

struct ReferenceParams {
  double depth = kDefaultDepth;   // m for every modulator
  double epsilon = 0.0;           // inner interferometer imperfection, rad
  double outer_phase = 0.0;       // outer arm phase, rad; 0 = arms add in phase at D
  double pzt_phase = 0.0;         // fig3 arm phase, rad
  int order = kDefaultEomOrder;
  double fig3_split = 0.5;        // fig3 first splitter reflectivity
  std::optional<double> fig3_lower_depth;  // fig3 second-arm depth (defaults to depth)
};

inline std::string reference_netlist(ReferenceConfig config, const ReferenceParams& p) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  const std::string order = " order=" + std::to_string(p.order);
  auto eom = [&](const std::string& id, const std::string& wire, double omega, double depth) {
    return "eom " + id + " wire=" + wire + " omega_ghz=" + num(omega) + " depth=" + num(depth) +
           order + "\n";
  };
  std::ostringstream os;
  if (config == ReferenceConfig::kFig3) {
    os << "# twin modulators, one per arm, common drive\n"
       << "source in\n"
       << "bs split in=in out=U,L r=" << num(p.fig3_split) << "\n"
       << eom("M1", "U", kOmegaC, p.depth)
       << eom("M2", "L", kOmegaC, p.fig3_lower_depth.value_or(p.depth))
       << "phase pzt wire=L phi=" << num(p.pzt_phase) << "\n"
       << "bs join in=U,L out=D,D2 r=0.5\n"
       << "detect D\ndetect D2\n";
    return os.str();
  }
  const double inner = (config == ReferenceConfig::kA ? 0.0 : std::numbers::pi) + p.epsilon;
  // The inner arms reach D through two cross ports (factor i each side of
  // bs3/bs4 relative to C), so C needs -pi/2 to meet F in phase.
  const double outer = p.outer_phase - std::numbers::pi / 2.0;
  os << "# nested Mach-Zehnder, configuration " << to_string(config) << "\n"
     << "source in\n"
     << "bs bs1 in=in out=C,E ratio=1:2\n"
     << "phase outer wire=C phi=" << num(outer) << "\n";
  if (config == ReferenceConfig::kC) os << "block stop wire=C\n";
  os << eom("C", "C", kOmegaC, p.depth)
     << eom("E", "E", kOmegaE, p.depth)
     << "bs bs2 in=E out=A,B r=0.5\n"
     << eom("A", "A", kOmegaA, p.depth)
     << eom("B", "B", kOmegaB, p.depth)
     << "phase inner wire=B phi=" << num(inner) << "\n"
     << "bs bs3 in=A,B out=G,F r=0.5\n"
     << eom("F", "F", kOmegaF, p.depth)
     << "bs bs4 in=C,F out=D,D2 ratio=2:1\n"
     << "detect D\ndetect D2\ndetect G\n";
  return os.str();
}

inline Circuit build_reference(ReferenceConfig config, const ReferenceParams& p = {}) {
  auto parsed = parse_netlist(reference_netlist(config, p));
  if (!parsed.ok()) {
    throw ConfigError("reference parameters out of range: " +
                      format_diagnostic(parsed.diagnostics.front()));
  }
  return *parsed.circuit;
}

// The post-selected port of every reference circuit.
inline constexpr const char* kReferenceDetect = "D";

// ---------------------------------------------------------------------------
// Envelope/etalon overlap

// kappa(d) = integral |E(u)|^2 T(u - d) du: the etalon response at detuning d
// from a single unit-power line.
inline double line_response(double d_ghz, const SpectralEnvelope& env, const EtalonSpec& etalon) {
  const double fwhm = env.fwhm_ghz();
  const double half = env.shape == EnvelopeShape::kGaussian ? 8.0 * fwhm : 400.0 * fwhm;
  const double h = std::min(fwhm, etalon.linewidth_ghz()) / 20.0;
  const auto n = static_cast<std::size_t>(std::ceil(2.0 * half / h));
  EtalonSpec centred = etalon;
  centred.setting_ghz = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double u = -half + static_cast<double>(i) * (2.0 * half / static_cast<double>(n));
    const double wgt = (i == 0 || i == n) ? 0.5 : 1.0;
    total += wgt * env.density(u) * etalon_transmission(u - d_ghz, centred);
  }
  return total * (2.0 * half / static_cast<double>(n));
}

// Interference term between two unit lines split by `split_ghz`:
// integral E(u) conj(E(u - split)) T(u - d) du. For real envelopes the
// imaginary part vanishes.
inline Complex cross_response(double d_ghz, double split_ghz, const SpectralEnvelope& env,
                              const EtalonSpec& etalon) {
  const double fwhm = env.fwhm_ghz();
  const double half = env.shape == EnvelopeShape::kGaussian ? 8.0 * fwhm : 400.0 * fwhm;
  const double h = std::min(fwhm, etalon.linewidth_ghz()) / 20.0;
  const double lo = std::min(0.0, split_ghz) - half;
  const double hi = std::max(0.0, split_ghz) + half;
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h));
  const double dx = (hi - lo) / static_cast<double>(n);
  EtalonSpec centred = etalon;
  centred.setting_ghz = 0.0;
  Complex total;
  for (std::size_t i = 0; i <= n; ++i) {
    const double u = lo + static_cast<double>(i) * dx;
    const double wgt = (i == 0 || i == n) ? 0.5 : 1.0;
    total += wgt * env.amplitude(u) * std::conj(env.amplitude(u - split_ghz)) *
             etalon_transmission(u - d_ghz, centred);
  }
  return total * dx;
}

// ---------------------------------------------------------------------------
// Scans

// Default photons per scan point. Sized so that, behind the 100 MHz etalon,
// the weakest first-order line of configuration (a) stands well clear of the
// carrier's Lorentzian leakage at k_sigma = 5.
inline constexpr double kDefaultPhotonsPerPoint = 2e9;

struct ScanConfig {
  double start_ghz = -4.0;
  double stop_ghz = 4.0;
  double step_ghz = 0.05;
  double photons_per_point = kDefaultPhotonsPerPoint;
  std::uint64_t seed = 1;
  double dark_probability = 0.0;

  void validate() const {
    if (!(step_ghz > 0.0) || stop_ghz < start_ghz) throw ConfigError("scan needs step > 0 and stop >= start");
    if (!(photons_per_point >= 1.0)) throw ConfigError("scan needs photons_per_point >= 1");
    if (!(dark_probability >= 0.0 && dark_probability <= 1.0)) throw ConfigError("dark probability outside [0,1]");
  }

  SpectralGrid grid() const { return SpectralGrid::range(start_ghz, stop_ghz, step_ghz); }
};

struct ScanPoint {
  double detuning_ghz = 0.0;
  double expected_p = 0.0;
  std::int64_t counts = 0;
};

struct SpectralScan {
  std::vector<ScanPoint> points;
  // Context needed to interpret the counts.
  SpectralEnvelope envelope;
  EtalonSpec etalon;
  ScanConfig config;
  EomFrequencies eoms;
  std::string detect;
  Warnings warnings;
};

// splitmix64 finalizer; gives each scan point its own generator stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::int64_t poisson_draw(double mean, std::uint64_t seed, std::uint64_t index) {
  if (!(mean > 0.0)) return 0;
  std::mt19937_64 rng(mix_seed(seed, index));
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(rng);
}

// p(nu) = integral S(w) T(w - nu) dw for each setting nu on the grid, with S
// the coherent spectrum of `lines`.
inline std::vector<double> filtered_probabilities(const std::vector<SpectralLine>& lines,
                                                  const SpectralEnvelope& env,
                                                  const EtalonSpec& etalon,
                                                  const SpectralGrid& settings) {
  std::vector<double> p(settings.count, 0.0);
  std::vector<SpectralLine> live;
  for (const auto& l : lines) {
    if (std::norm(l.amplitude) > 1e-30) live.push_back(l);
  }
  if (live.empty()) return p;
  const double fwhm = env.fwhm_ghz();
  const double half = env.shape == EnvelopeShape::kGaussian ? 8.0 * fwhm : 400.0 * fwhm;
  const double h = std::min(fwhm, etalon.linewidth_ghz()) / 20.0;

  // Union of [shift - half, shift + half] intervals.
  std::vector<std::pair<double, double>> spans;
  for (const auto& l : live) spans.emplace_back(l.shift_ghz - half, l.shift_ghz + half);
  std::sort(spans.begin(), spans.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& s : spans) {
    if (!merged.empty() && s.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, s.second);
    } else {
      merged.push_back(s);
    }
  }
  EtalonSpec centred = etalon;
  centred.setting_ghz = 0.0;
  for (const auto& [lo, hi] : merged) {
    const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h));
    const double dx = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i <= n; ++i) {
      const double w = lo + static_cast<double>(i) * dx;
      Complex sum;
      for (const auto& l : live) sum += l.amplitude * env.amplitude(w - l.shift_ghz);
      const double density = std::norm(sum) * dx * ((i == 0 || i == n) ? 0.5 : 1.0);
      if (density == 0.0) continue;
      for (std::size_t k = 0; k < settings.count; ++k) {
        p[k] += density * etalon_transmission(w - settings.at(k), centred);
      }
    }
  }
  for (double& v : p) v = std::clamp(v, 0.0, 1.0);
  return p;
}

// Scans the etalon across the output of `state` on `detect`.
inline SpectralScan run_spectrum_scan(const PhotonState& state, const std::string& detect,
                                      const EomFrequencies& eoms, const EtalonSpec& etalon,
                                      const SpectralEnvelope& env, const ScanConfig& scan) {
  env.validate();
  etalon.validate();
  scan.validate();
  SpectralScan out;
  out.envelope = env;
  out.etalon = etalon;
  out.config = scan;
  out.eoms = eoms;
  out.detect = detect;
  const auto grid = scan.grid();
  if (grid.at(0) - 0.0 < -etalon.fsr_ghz / 2.0 || grid.stop_ghz() > etalon.fsr_ghz / 2.0) {
    out.warnings.push_back("scan extends beyond one free spectral range; replicas overlap");
  }
  const auto lines = spectral_lines(state, detect, eoms);
  const auto p = filtered_probabilities(lines, env, etalon, grid);
  out.points.resize(grid.count);
  for (std::size_t i = 0; i < grid.count; ++i) {
    auto& pt = out.points[i];
    pt.detuning_ghz = grid.at(i);
    pt.expected_p = p[i];
    const double mean = scan.photons_per_point * (p[i] + scan.dark_probability);
    pt.counts = poisson_draw(mean, scan.seed, i);
  }
  return out;
}

inline SpectralScan run_spectrum_scan(const Circuit& c, const std::string& detect,
                                      const EtalonSpec& etalon, const SpectralEnvelope& env,
                                      const ScanConfig& scan,
                                      const PropagationOptions& opts = {}) {
  if (!c.is_detect(detect)) throw ConfigError("'" + detect + "' is not a detect wire");
  const auto result = propagate(c, opts);
  return run_spectrum_scan(result.outputs.at(detect), detect, c.eom_frequencies(), etalon, env, scan);
}

// Etalon-filtered probability of the single line at `shift_ghz`, ignoring
// every other line: the strength of that line as a peak.
inline double line_probability(const PhotonState& state, const std::string& wire,
                               const EomFrequencies& eoms, double shift_ghz,
                               const SpectralEnvelope& env, const EtalonSpec& etalon) {
  const auto lines = spectral_lines(state, wire, eoms);
  return std::norm(line_amplitude(lines, shift_ghz)) * line_response(0.0, env, etalon);
}

// ---------------------------------------------------------------------------
// Peak detection

inline constexpr double kDefaultKSigma = 5.0;

enum class CountSource { kCounts, kExpected };

struct PeakOptions {
  double k_sigma = kDefaultKSigma;
  CountSource source = CountSource::kCounts;
};

struct PeakEntry {
  std::string eom;
  double frequency_ghz = 0.0;
  bool assessable = true;
  double line_weight = 0.0;    // fitted line power |A|^2 (per photon)
  double weight_sigma = 0.0;   // its standard error
  double counts_above_baseline = 0.0;  // fitted line height at the peak, counts
  double baseline = 0.0;       // model counts at the peak without this line
  double significance = 0.0;   // likelihood-ratio significance of the line
  bool present = false;
};

struct PeakReport {
  std::vector<PeakEntry> entries;  // one per registered modulator, sorted by id
  double carrier_weight = 0.0;
  double carrier_sigma = 0.0;
  double carrier_significance = 0.0;
  double background_counts = 0.0;  // fitted flat floor per point
  double k_sigma = kDefaultKSigma;

  std::set<std::string> present() const {
    std::set<std::string> out;
    for (const auto& e : entries) {
      if (e.present) out.insert(e.eom);
    }
    return out;
  }

  const PeakEntry* find(const std::string& eom) const {
    for (const auto& e : entries) {
      if (e.eom == eom) return &e;
    }
    return nullptr;
  }
};

namespace detail {

// Coherent line model of a scan: a flat floor plus complex amplitudes a_l at
// fixed centres, mu(nu) = floor + N |sum_l a_l E(w - s_l)|^2 filtered by the
// etalon. Parameters are [floor, Re a_0, Im a_0, Re a_1, Im a_1, ...].
struct LineFit {
  std::vector<double> centres;
  Eigen::MatrixXd kappa;  // npts x lines, unit-line responses
  struct Pair {
    std::size_t a = 0;
    std::size_t b = 0;
    Eigen::VectorXcd overlap;  // integral E_a conj(E_b) T per point
  };
  std::vector<Pair> pairs;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  double photons = 1.0;

  std::size_t lines() const { return centres.size(); }
  std::size_t params() const { return 1 + 2 * lines(); }

  static Complex amp(const Eigen::VectorXd& th, std::size_t l) {
    return {th(1 + 2 * l), th(2 + 2 * l)};
  }

  Eigen::VectorXd model(const Eigen::VectorXd& th, Eigen::MatrixXd* jac) const {
    const auto npts = static_cast<std::size_t>(y.size());
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(npts), th(0));
    if (jac != nullptr) {
      jac->setZero(static_cast<Eigen::Index>(npts), static_cast<Eigen::Index>(params()));
      jac->col(0).setOnes();
    }
    for (std::size_t l = 0; l < lines(); ++l) {
      const Complex a = amp(th, l);
      const auto col = static_cast<Eigen::Index>(l);
      mu += photons * std::norm(a) * kappa.col(col);
      if (jac != nullptr) {
        jac->col(static_cast<Eigen::Index>(1 + 2 * l)) += 2.0 * photons * a.real() * kappa.col(col);
        jac->col(static_cast<Eigen::Index>(2 + 2 * l)) += 2.0 * photons * a.imag() * kappa.col(col);
      }
    }
    for (const auto& p : pairs) {
      const Complex a = amp(th, p.a);
      const Complex b = amp(th, p.b);
      for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const Complex o = p.overlap(i);
        mu(i) += 2.0 * photons * (a * std::conj(b) * o).real();
        if (jac != nullptr) {
          const Complex bo = std::conj(b) * o;
          const Complex ao = a * o;
          (*jac)(i, static_cast<Eigen::Index>(1 + 2 * p.a)) += 2.0 * photons * bo.real();
          (*jac)(i, static_cast<Eigen::Index>(2 + 2 * p.a)) -= 2.0 * photons * bo.imag();
          (*jac)(i, static_cast<Eigen::Index>(1 + 2 * p.b)) += 2.0 * photons * ao.real();
          (*jac)(i, static_cast<Eigen::Index>(2 + 2 * p.b)) += 2.0 * photons * ao.imag();
        }
      }
    }
    return mu;
  }

  double chi2(const Eigen::VectorXd& th) const {
    const Eigen::VectorXd r = y - model(th, nullptr);
    return (r.array().square() * w.array()).sum();
  }

  // Levenberg-Marquardt over the parameters not listed in `fixed`.
  double minimize(Eigen::VectorXd& th, const std::vector<bool>& fixed) const {
    std::vector<Eigen::Index> free;
    for (std::size_t k = 0; k < params(); ++k) {
      if (!fixed[k]) free.push_back(static_cast<Eigen::Index>(k));
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    double current = chi2(th);
    double lambda = 1e-3;
    Eigen::MatrixXd jac;
    for (int iter = 0; iter < 500; ++iter) {
      const Eigen::VectorXd mu = model(th, &jac);
      const Eigen::VectorXd r = y - mu;
      Eigen::MatrixXd jf(jac.rows(), nf);
      for (Eigen::Index k = 0; k < nf; ++k) jf.col(k) = jac.col(free[static_cast<std::size_t>(k)]);
      const Eigen::MatrixXd normal = jf.transpose() * w.asDiagonal() * jf;
      const Eigen::VectorXd grad = jf.transpose() * (w.array() * r.array()).matrix();
      const double floor_diag = 1e-12 * std::max(normal.diagonal().maxCoeff(), 1e-300);
      bool improved = false;
      while (lambda < 1e12) {
        Eigen::MatrixXd damped = normal;
        for (Eigen::Index k = 0; k < nf; ++k) {
          damped(k, k) += lambda * std::max(normal(k, k), floor_diag);
        }
        const Eigen::VectorXd step = damped.ldlt().solve(grad);
        Eigen::VectorXd trial = th;
        for (Eigen::Index k = 0; k < nf; ++k) trial(free[static_cast<std::size_t>(k)]) += step(k);
        const double next = chi2(trial);
        if (std::isfinite(next) && next <= current) {
          const double gain = current - next;
          th = trial;
          current = next;
          lambda = std::max(lambda / 10.0, 1e-12);
          improved = gain > 1e-12 * std::max(current, 1.0);
          break;
        }
        lambda *= 10.0;
      }
      if (!improved) break;
    }
    return current;
  }

  Eigen::MatrixXd covariance(const Eigen::VectorXd& th, const std::vector<bool>& fixed) const {
    Eigen::MatrixXd jac;
    model(th, &jac);
    for (std::size_t k = 0; k < params(); ++k) {
      if (fixed[k]) jac.col(static_cast<Eigen::Index>(k)).setZero();
    }
    Eigen::MatrixXd normal = jac.transpose() * w.asDiagonal() * jac;
    for (std::size_t k = 0; k < params(); ++k) {
      if (fixed[k]) normal(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
    }
    return normal.completeOrthogonalDecomposition().pseudoInverse();
  }
};

}  // namespace detail

// Fits the scan with a flat floor plus coherent lines of the known instrument
// profile at the carrier and at +-Omega of every modulator. Neighbouring lines
// interfere where their envelopes overlap, so the model works with complex
// line amplitudes. A modulator is on the operational trajectory when removing
// its +Omega line worsens the fit by at least k_sigma in likelihood-ratio
// terms (Poisson weights).
inline PeakReport detect_peaks(const SpectralScan& scan, const PeakOptions& opts = {}) {
  PeakReport report;
  report.k_sigma = opts.k_sigma;
  const std::size_t npts = scan.points.size();
  if (npts == 0) return report;
  const double lo = scan.points.front().detuning_ghz;
  const double hi = scan.points.back().detuning_ghz;

  // Lines just outside the scan still leak into it, so they are fitted too
  // but never assessed.
  const double margin = 4.0 * scan.envelope.fwhm_ghz();
  detail::LineFit fit;
  fit.photons = scan.config.photons_per_point;
  fit.centres.push_back(0.0);
  auto add_centre = [&](double s) {
    if (s < lo - margin || s > hi + margin) return;
    for (double c : fit.centres) {
      if (std::abs(c - s) < 1e-9) return;
    }
    fit.centres.push_back(s);
  };
  for (const auto& [id, omega] : scan.eoms) {
    add_centre(omega);
    add_centre(-omega);
  }
  auto line_of = [&](double s) -> std::optional<std::size_t> {
    if (s < lo - 1e-9 || s > hi + 1e-9) return std::nullopt;
    for (std::size_t j = 0; j < fit.centres.size(); ++j) {
      if (std::abs(fit.centres[j] - s) < 1e-9) return j;
    }
    return std::nullopt;
  };

  std::map<std::int64_t, double> response_cache;
  auto response = [&](double d) {
    const auto key = static_cast<std::int64_t>(std::llround(d * 1e9));
    auto it = response_cache.find(key);
    if (it != response_cache.end()) return it->second;
    const double v = line_response(d, scan.envelope, scan.etalon);
    response_cache.emplace(key, v);
    return v;
  };
  const double peak_response = response(0.0);
  const auto L = fit.lines();
  fit.kappa.resize(static_cast<Eigen::Index>(npts), static_cast<Eigen::Index>(L));
  fit.y.resize(static_cast<Eigen::Index>(npts));
  fit.w.resize(static_cast<Eigen::Index>(npts));
  for (std::size_t i = 0; i < npts; ++i) {
    const auto& pt = scan.points[i];
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < L; ++j) {
      fit.kappa(row, static_cast<Eigen::Index>(j)) = response(pt.detuning_ghz - fit.centres[j]);
    }
    const double value = opts.source == CountSource::kCounts
                             ? static_cast<double>(pt.counts)
                             : fit.photons * (pt.expected_p + scan.config.dark_probability);
    fit.y(row) = value;
    fit.w(row) = 1.0 / std::max(value, 1.0);
  }
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = a + 1; b < L; ++b) {
      const double split = fit.centres[b] - fit.centres[a];
      const Complex mid = cross_response(0.5 * split, split, scan.envelope, scan.etalon);
      if (std::abs(mid) < 1e-8 * peak_response) continue;
      detail::LineFit::Pair p{a, b, Eigen::VectorXcd(static_cast<Eigen::Index>(npts))};
      for (std::size_t i = 0; i < npts; ++i) {
        p.overlap(static_cast<Eigen::Index>(i)) =
            cross_response(scan.points[i].detuning_ghz - fit.centres[a], split, scan.envelope, scan.etalon);
      }
      fit.pairs.push_back(std::move(p));
    }
  }

  // Starting magnitudes from an incoherent linear fit.
  Eigen::VectorXd start_power(static_cast<Eigen::Index>(L));
  Eigen::VectorXd start_floor = Eigen::VectorXd::Zero(1);
  {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(npts), static_cast<Eigen::Index>(L + 1));
    design.leftCols(static_cast<Eigen::Index>(L)) = fit.photons * fit.kappa;
    design.col(static_cast<Eigen::Index>(L)).setOnes();
    Eigen::VectorXd scale(design.cols());
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
      const double norm = (design.col(j).array() * fit.w.array().sqrt()).matrix().norm();
      scale(j) = norm > 0.0 ? 1.0 / norm : 1.0;
    }
    const Eigen::MatrixXd scaled = design * scale.asDiagonal();
    const Eigen::MatrixXd normal = scaled.transpose() * fit.w.asDiagonal() * scaled;
    const Eigen::LDLT<Eigen::MatrixXd> solver(normal);
    const Eigen::VectorXd x =
        scale.asDiagonal() * solver.solve(scaled.transpose() * fit.w.asDiagonal() * fit.y);
    const Eigen::VectorXd var =
        (scale.asDiagonal() * solver.solve(Eigen::MatrixXd::Identity(design.cols(), design.cols())) *
         scale.asDiagonal())
            .diagonal();
    for (std::size_t j = 0; j < L; ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      start_power(k) = std::max(x(k), std::sqrt(std::max(var(k), 0.0)));
      if (!(start_power(k) > 0.0)) start_power(k) = 1e-12;
    }
    start_floor(0) = x(static_cast<Eigen::Index>(L));
  }

  // Global phase is fixed by a real carrier; the relative phases come from a
  // few deterministic starts.
  std::vector<bool> fixed(fit.params(), false);
  fixed[2] = true;
  Eigen::VectorXd best;
  double best_chi2 = std::numeric_limits<double>::infinity();
  const int starts = fit.pairs.empty() ? 1 : 8;
  for (int s = 0; s < starts; ++s) {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fit.params()));
    th(0) = start_floor(0);
    for (std::size_t l = 0; l < L; ++l) {
      const double phase = l == 0 ? 0.0 : 2.399963229728653 * static_cast<double>((s + 1) * l);
      const Complex a = std::polar(std::sqrt(start_power(static_cast<Eigen::Index>(l))), phase);
      th(static_cast<Eigen::Index>(1 + 2 * l)) = a.real();
      th(static_cast<Eigen::Index>(2 + 2 * l)) = a.imag();
    }
    const double c2 = fit.minimize(th, fixed);
    if (c2 < best_chi2) {
      best_chi2 = c2;
      best = th;
    }
  }
  const Eigen::MatrixXd cov = fit.covariance(best, fixed);
  auto power_sigma = [&](std::size_t l) {
    const Complex a = detail::LineFit::amp(best, l);
    const auto re = static_cast<Eigen::Index>(1 + 2 * l);
    const auto im = static_cast<Eigen::Index>(2 + 2 * l);
    const double var = 4.0 * (a.real() * a.real() * cov(re, re) + a.imag() * a.imag() * cov(im, im) +
                               2.0 * a.real() * a.imag() * cov(re, im));
    return std::sqrt(std::max(var, 0.0));
  };

  report.carrier_weight = std::norm(detail::LineFit::amp(best, 0));
  report.carrier_sigma = power_sigma(0);
  report.background_counts = best(0);
  {
    Eigen::VectorXd without = best;
    without(1) = 0.0;
    std::vector<bool> fixed_without = fixed;
    fixed_without[1] = true;
    report.carrier_significance = std::sqrt(std::max(fit.minimize(without, fixed_without) - best_chi2, 0.0));
  }

  for (const auto& [id, omega] : scan.eoms) {
    PeakEntry e;
    e.eom = id;
    e.frequency_ghz = omega;
    const auto line = line_of(omega);
    if (!line) {
      e.assessable = false;
      report.entries.push_back(e);
      continue;
    }
    e.line_weight = std::norm(detail::LineFit::amp(best, *line));
    e.weight_sigma = power_sigma(*line);
    e.counts_above_baseline = e.line_weight * fit.photons * peak_response;

    // Refit with this line removed.
    Eigen::VectorXd without = best;
    without(static_cast<Eigen::Index>(1 + 2 * *line)) = 0.0;
    without(static_cast<Eigen::Index>(2 + 2 * *line)) = 0.0;
    std::vector<bool> fixed_without = fixed;
    fixed_without[1 + 2 * *line] = true;
    fixed_without[2 + 2 * *line] = true;
    const double c2_without = fit.minimize(without, fixed_without);
    e.significance = std::sqrt(std::max(c2_without - best_chi2, 0.0));

    std::size_t nearest = 0;
    for (std::size_t i = 1; i < npts; ++i) {
      if (std::abs(scan.points[i].detuning_ghz - omega) <
          std::abs(scan.points[nearest].detuning_ghz - omega)) {
        nearest = i;
      }
    }
    Eigen::VectorXd others = best;
    others(static_cast<Eigen::Index>(1 + 2 * *line)) = 0.0;
    others(static_cast<Eigen::Index>(2 + 2 * *line)) = 0.0;
    e.baseline = fit.model(others, nullptr)(static_cast<Eigen::Index>(nearest));
    e.present = e.significance >= opts.k_sigma;
    report.entries.push_back(e);
  }
  return report;
}

// The operational trajectory: modulators whose frequency shows up as a peak.
inline std::set<std::string> operational_trajectory(const SpectralScan& scan,
                                                    const PeakOptions& opts = {}) {
  return detect_peaks(scan, opts).present();
}

struct WeakValueEstimate {
  double magnitude = 0.0;
  double sigma = 0.0;
  bool defined = true;
};

// |W| = (2/m) sqrt(line(+Omega_X) / carrier). Both lines go through the same
// envelope-etalon response, so the fitted weights are already corrected for
// it. Undefined unless the carrier itself is detected.
inline WeakValueEstimate infer_weak_value(const SpectralScan& scan, const std::string& eom,
                                          double depth, const PeakOptions& opts = {}) {
  const auto report = detect_peaks(scan, opts);
  WeakValueEstimate est;
  const auto* e = report.find(eom);
  if (e == nullptr) throw ConfigError("unknown EOM '" + eom + "'");
  if (!e->assessable || report.carrier_significance < opts.k_sigma || !(depth > 0.0)) {
    est.defined = false;
    return est;
  }
  const double ratio = std::max(e->line_weight, 0.0) / report.carrier_weight;
  est.magnitude = (2.0 / depth) * std::sqrt(ratio);
  if (e->line_weight > 0.0) {
    const double rel = 0.5 * std::hypot(e->weight_sigma / e->line_weight,
                                         report.carrier_sigma / report.carrier_weight);
    est.sigma = est.magnitude * rel;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Fringe visibility

enum class VisibilityStatus { kOk, kNoFringe, kUndefined };

inline const char* to_string(VisibilityStatus s) {
  switch (s) {
    case VisibilityStatus::kOk: return "ok";
    case VisibilityStatus::kNoFringe: return "no_fringe";
    case VisibilityStatus::kUndefined: return "undefined";
  }
  return "?";
}

struct VisibilityResult {
  double value = 0.0;
  VisibilityStatus status = VisibilityStatus::kUndefined;
  std::vector<double> phases;
  std::vector<double> expected_p;
  std::vector<std::int64_t> counts;
};

// Relative fringe depth below which the sweep is reported as no fringe.
inline constexpr double kNoFringeThreshold = 1e-9;

inline VisibilityResult fringe_visibility(const std::vector<double>& values) {
  VisibilityResult r;
  if (values.empty()) return r;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (!(*mx > 0.0)) return r;
  r.value = (*mx - *mn) / (*mx + *mn);
  r.status = r.value < kNoFringeThreshold ? VisibilityStatus::kNoFringe : VisibilityStatus::kOk;
  return r;
}

// Fits a + b cos(phi) + c sin(phi) and returns sqrt(b^2 + c^2) / a.
inline VisibilityResult fitted_visibility(const std::vector<double>& phases,
                                          const std::vector<double>& values) {
  VisibilityResult r;
  if (phases.size() != values.size() || phases.size() < 3) return r;
  Eigen::MatrixXd a(phases.size(), 3);
  Eigen::VectorXd y(phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = std::cos(phases[i]);
    a(i, 2) = std::sin(phases[i]);
    y(i) = values[i];
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(y);
  if (!(coef(0) > 0.0)) return r;
  r.value = std::hypot(coef(1), coef(2)) / coef(0);
  r.status = r.value < kNoFringeThreshold ? VisibilityStatus::kNoFringe : VisibilityStatus::kOk;
  return r;
}

struct PhaseSweep {
  std::size_t points = 16;
  double span = 2.0 * std::numbers::pi;
};

// Sweeps the fig3 arm phase with the etalon parked on the +Omega sideband.
// Expected mode uses the probability of the +Omega line itself (noise-free);
// counts mode draws photons behind the etalon, carrier leakage included, and
// fits a sinusoid.
inline VisibilityResult visibility(const ReferenceParams& base, const PhaseSweep& sweep,
                                   const SpectralEnvelope& env, EtalonSpec etalon,
                                   const ScanConfig& scan, CountSource source = CountSource::kExpected) {
  if (sweep.points < 8 || sweep.span < 2.0 * std::numbers::pi - 1e-12) {
    throw ConfigError("visibility sweep needs >= 8 points covering >= 2 pi");
  }
  etalon.setting_ghz = 0.0;
  const double peak_response = line_response(0.0, env, etalon);
  std::vector<double> phases, values;
  std::vector<std::int64_t> counts;
  for (std::size_t i = 0; i < sweep.points; ++i) {
    ReferenceParams p = base;
    p.pzt_phase = sweep.span * static_cast<double>(i) / static_cast<double>(sweep.points);
    const Circuit c = build_reference(ReferenceConfig::kFig3, p);
    const auto out = propagate(c).outputs.at(kReferenceDetect);
    const auto lines = spectral_lines(out, kReferenceDetect, c.eom_frequencies());
    const SpectralGrid one{kOmegaC, 1.0, 1};
    const double filtered = filtered_probabilities(lines, env, etalon, one)[0];
    phases.push_back(p.pzt_phase);
    values.push_back(std::norm(line_amplitude(lines, kOmegaC)) * peak_response);
    counts.push_back(
        poisson_draw(scan.photons_per_point * (filtered + scan.dark_probability), scan.seed, i));
  }
  VisibilityResult r;
  if (source == CountSource::kExpected) {
    r = fringe_visibility(values);
  } else {
    std::vector<double> as_double(counts.begin(), counts.end());
    r = fitted_visibility(phases, as_double);
  }
  r.phases = std::move(phases);
  r.expected_p = std::move(values);
  r.counts = std::move(counts);
  return r;
}

}  // namespace pathmark
