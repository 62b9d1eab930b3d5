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

// Two-state (pre- and post-selected) analysis of the path degree of freedom.
//
// Cut k is the cross-section just before element k (cut n follows the last
// element). The forward state is propagated from the source, the backward
// state by adjoint propagation from the post-selected detect wire. Modulators
// act as identity here: at carrier level they do not move amplitude between
// paths, their effect is on the frequency meter.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pathmark/errors.hpp"
#include "pathmark/netlist.hpp"

namespace pathmark {

using PathAmplitudes = std::map<std::string, Complex>;

struct TwoStateVector {
  std::vector<PathAmplitudes> forward;   // psi at each cut
  std::vector<PathAmplitudes> backward;  // phi at each cut (ket components)
  std::vector<Complex> overlaps;         // <phi|psi> at each cut
  std::vector<std::string> cut_labels;
  std::string postselect;

  std::size_t cut_count() const { return forward.size(); }
  Complex overlap() const { return overlaps.empty() ? Complex{} : overlaps.back(); }
};

inline Complex inner(const PathAmplitudes& phi, const PathAmplitudes& psi) {
  Complex sum;
  for (const auto& [w, a] : psi) {
    auto it = phi.find(w);
    if (it != phi.end()) sum += std::conj(it->second) * a;
  }
  return sum;
}

inline TwoStateVector two_state(const Circuit& c, const std::string& postselect) {
  require_valid(c);
  if (!c.is_detect(postselect)) {
    throw ConfigError("post-selection wire '" + postselect + "' is not a detect wire");
  }
  const std::size_t n = c.elements.size();
  TwoStateVector tsv;
  tsv.postselect = postselect;
  tsv.forward.reserve(n + 1);

  auto get = [](const PathAmplitudes& m, const std::string& w) {
    auto it = m.find(w);
    return it == m.end() ? Complex{} : it->second;
  };

  PathAmplitudes psi{{c.source, 1.0}};
  tsv.forward.push_back(psi);
  for (const auto& e : c.elements) {
    std::visit([&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, BeamSplitterSpec>) {
        const double rr = std::sqrt(s.reflectivity);
        const Complex it(0.0, std::sqrt(1.0 - s.reflectivity));
        const Complex a1 = get(psi, s.in[0]);
        const Complex a2 = s.in.size() == 2 ? get(psi, s.in[1]) : Complex{};
        for (const auto& w : s.in) psi.erase(w);
        psi[s.out[0]] = rr * a1 + it * a2;
        psi[s.out[1]] = it * a1 + rr * a2;
      } else if constexpr (std::is_same_v<T, PhaseShifterSpec>) {
        psi[s.wire] *= std::polar(1.0, s.phi);
      } else if constexpr (std::is_same_v<T, BlockSpec>) {
        psi[s.wire] = 0.0;
      }
    }, e);
    tsv.forward.push_back(psi);
  }

  tsv.backward.resize(n + 1);
  PathAmplitudes phi;
  for (const auto& [w, a] : tsv.forward[n]) phi[w] = (w == postselect) ? 1.0 : 0.0;
  tsv.backward[n] = phi;
  for (std::size_t k = n; k-- > 0;) {
    std::visit([&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, BeamSplitterSpec>) {
        const double rr = std::sqrt(s.reflectivity);
        const Complex it_conj(0.0, -std::sqrt(1.0 - s.reflectivity));
        const Complex o1 = get(phi, s.out[0]);
        const Complex o2 = get(phi, s.out[1]);
        phi.erase(s.out[0]);
        phi.erase(s.out[1]);
        phi[s.in[0]] = rr * o1 + it_conj * o2;
        if (s.in.size() == 2) phi[s.in[1]] = it_conj * o1 + rr * o2;
      } else if constexpr (std::is_same_v<T, PhaseShifterSpec>) {
        phi[s.wire] *= std::polar(1.0, -s.phi);
      } else if constexpr (std::is_same_v<T, BlockSpec>) {
        phi[s.wire] = 0.0;
      }
    }, c.elements[k]);
    tsv.backward[k] = phi;
  }

  for (std::size_t k = 0; k <= n; ++k) {
    tsv.overlaps.push_back(inner(tsv.backward[k], tsv.forward[k]));
    tsv.cut_labels.push_back(k < n ? "before " + element_id(c.elements[k]) : "end");
  }
  return tsv;
}

// ---------------------------------------------------------------------------
// Projectors and weak values

enum class ProjectorKind { kDiagonal, kRankOne };

// Diagonal: projector onto the listed wires (coefficients ignored).
// Rank one: |c><c| with c the listed coefficients, which must have unit norm.
// The cut is `cut` if set, else the cut just before `before_element`, else
// the first cut on which every listed wire is live.
struct ProjectorSpec {
  ProjectorKind kind = ProjectorKind::kDiagonal;
  std::map<std::string, Complex> support;
  std::optional<std::size_t> cut;
  std::optional<std::string> before_element;
  std::string label;

  static ProjectorSpec on_wire(const std::string& wire) {
    ProjectorSpec p;
    p.support[wire] = 1.0;
    p.label = "P_" + wire;
    return p;
  }
};

inline std::size_t resolve_cut(const TwoStateVector& tsv, const Circuit& c,
                               const ProjectorSpec& p) {
  std::optional<std::size_t> cut = p.cut;
  if (!cut && p.before_element) {
    cut = c.index_of(*p.before_element);
    if (!cut) throw ConfigError("projector references unknown element '" + *p.before_element + "'");
  }
  auto all_live = [&](std::size_t k) {
    for (const auto& [w, coeff] : p.support) {
      if (tsv.forward[k].count(w) == 0) return false;
    }
    return true;
  };
  if (!cut) {
    for (std::size_t k = 0; k < tsv.cut_count(); ++k) {
      if (all_live(k)) {
        cut = k;
        break;
      }
    }
    if (!cut) throw ConfigError("no cut carries every wire of projector " + p.label);
  }
  if (*cut >= tsv.cut_count()) throw ConfigError("projector cut out of range");
  if (!all_live(*cut)) {
    throw ConfigError("projector " + p.label + " names a wire not live at its cut");
  }
  if (p.support.empty()) throw ConfigError("projector has empty support");
  if (p.kind == ProjectorKind::kRankOne) {
    double norm = 0.0;
    for (const auto& [w, coeff] : p.support) norm += std::norm(coeff);
    if (std::abs(norm - 1.0) > 1e-12) {
      throw ConfigError("rank-one projector " + p.label + " is not idempotent (|c| != 1)");
    }
  }
  return *cut;
}

// Projector for the path through a modulator, evaluated at the modulator.
inline ProjectorSpec eom_projector(const Circuit& c, const std::string& eom_id) {
  for (const auto& eom : c.eoms()) {
    if (eom.id == eom_id) {
      ProjectorSpec p = ProjectorSpec::on_wire(eom.wire);
      p.before_element = eom.id;
      p.label = "P_" + eom.id;
      return p;
    }
  }
  throw ConfigError("unknown EOM '" + eom_id + "'");
}

struct WeakValueReport {
  Complex value;
  bool divergent = false;
  Complex numerator;  // <phi|P|psi>
  Complex overlap;    // <phi|psi> at the projector's cut
  std::size_t cut = 0;
  ProjectorSpec projector;
  std::optional<double> epsilon;
};

inline constexpr double kDivergentOverlap = 1e-14;

// <phi|P|psi> / <phi|psi>.
inline WeakValueReport weak_value(const TwoStateVector& tsv, const Circuit& c,
                                  const ProjectorSpec& p) {
  WeakValueReport r;
  r.projector = p;
  r.cut = resolve_cut(tsv, c, p);
  const auto& psi = tsv.forward[r.cut];
  const auto& phi = tsv.backward[r.cut];
  if (p.kind == ProjectorKind::kDiagonal) {
    for (const auto& [w, coeff] : p.support) r.numerator += std::conj(phi.at(w)) * psi.at(w);
  } else {
    Complex phi_c, c_psi;
    for (const auto& [w, coeff] : p.support) {
      phi_c += std::conj(phi.at(w)) * coeff;
      c_psi += std::conj(coeff) * psi.at(w);
    }
    r.numerator = phi_c * c_psi;
  }
  r.overlap = tsv.overlaps[r.cut];
  if (std::abs(r.overlap) < kDivergentOverlap) {
    r.divergent = true;
  } else {
    r.value = r.numerator / r.overlap;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Trajectories

inline constexpr double kDefaultSupportThreshold = 1e-6;

// Wires on which psi and phi both exceed `eta` on some cut.
inline std::set<std::string> tsvf_trajectory(const TwoStateVector& tsv,
                                             double eta = kDefaultSupportThreshold) {
  std::set<std::string> out;
  for (std::size_t k = 0; k < tsv.cut_count(); ++k) {
    for (const auto& [w, a] : tsv.forward[k]) {
      auto it = tsv.backward[k].find(w);
      if (it != tsv.backward[k].end() && std::abs(a) > eta && std::abs(it->second) > eta) {
        out.insert(w);
      }
    }
  }
  return out;
}

// Modulators sitting where psi and phi both exceed `eta`: the trajectory as
// the frequency meter can see it.
inline std::set<std::string> tsvf_eom_set(const TwoStateVector& tsv, const Circuit& c,
                                          double eta = kDefaultSupportThreshold) {
  std::set<std::string> out;
  for (std::size_t k = 0; k < c.elements.size(); ++k) {
    const auto* eom = std::get_if<EomSpec>(&c.elements[k]);
    if (eom == nullptr) continue;
    const auto& psi = tsv.forward[k];
    const auto& phi = tsv.backward[k];
    auto a = psi.find(eom->wire);
    auto b = phi.find(eom->wire);
    if (a != psi.end() && b != phi.end() && std::abs(a->second) > eta &&
        std::abs(b->second) > eta) {
      out.insert(eom->id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling with the imperfection

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw ConfigError("log_spaced needs 0 < lo < hi, count >= 2");
  std::vector<double> out(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool identically_zero = false;
  std::size_t points_used = 0;
  std::vector<WeakValueReport> reports;
  Warnings warnings;
};

// Least-squares slope of log|W| against log(epsilon).
inline ScalingFit weak_value_scaling(const std::function<Circuit(double)>& family,
                                     const std::string& postselect,
                                     const std::function<ProjectorSpec(const Circuit&)>& projector,
                                     const std::vector<double>& epsilons) {
  ScalingFit fit;
  std::vector<double> xs, ys;
  bool any_nonzero = false;
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw ConfigError("epsilon grid must be positive");
    const Circuit c = family(eps);
    const auto tsv = two_state(c, postselect);
    auto report = weak_value(tsv, c, projector(c));
    report.epsilon = eps;
    fit.reports.push_back(report);
    if (report.divergent) {
      fit.warnings.push_back("divergent weak value at epsilon=" + std::to_string(eps) + " excluded");
      continue;
    }
    if (std::abs(report.value) == 0.0) {
      fit.warnings.push_back("zero weak value at epsilon=" + std::to_string(eps) + " excluded");
      continue;
    }
    any_nonzero = true;
    xs.push_back(std::log(eps));
    ys.push_back(std::log(std::abs(report.value)));
  }
  fit.points_used = xs.size();
  if (!any_nonzero) {
    fit.identically_zero = true;
    return fit;
  }
  if (xs.size() < 2) throw ConfigError("too few finite weak values to fit a power law");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace pathmark
