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

// Netlist DSL, circuit validation and state propagation.
//
// Grammar (line oriented, '#' starts a comment):
//
//   source <wire>
//   bs <id> in=<w>[,<w>] out=<w>,<w> (r=<float> | ratio=<int>:<int>)
//   phase <id> wire=<w> phi=<float_rad>
//   eom <id> wire=<w> omega_ghz=<float> depth=<float> [order=<int>]
//   block <id> wire=<w>
//   detect <wire>
//
// Wires are single-writer/single-reader. Beam splitters and the source write
// wires; phase, eom and block act in place on a wire between its writer and
// its reader, in file order.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pathmark/elements.hpp"
#include "pathmark/errors.hpp"
#include "pathmark/spectral_state.hpp"

namespace pathmark {

using Element = std::variant<BeamSplitterSpec, PhaseShifterSpec, EomSpec, BlockSpec>;

inline const std::string& element_id(const Element& e) {
  return std::visit([](const auto& spec) -> const std::string& { return spec.id; }, e);
}

// Wires an element reads and writes. In-place elements read and write the
// same wire.
inline std::vector<std::string> element_inputs(const Element& e) {
  if (const auto* bs = std::get_if<BeamSplitterSpec>(&e)) return bs->in;
  return {std::visit([](const auto& s) -> std::string {
    if constexpr (requires { s.wire; }) return s.wire; else return {};
  }, e)};
}

inline bool is_in_place(const Element& e) { return !std::holds_alternative<BeamSplitterSpec>(e); }

struct SourcePos {
  int line = 0;
  int column = 0;
};

struct Circuit {
  std::string source;
  std::vector<Element> elements;  // topological order once validated
  std::vector<std::string> detects;
  // Positions of elements in the netlist text, parallel to `elements`; not
  // part of equality.
  std::vector<SourcePos> positions;
  std::vector<SourcePos> detect_positions;  // parallel to `detects`

  bool operator==(const Circuit& o) const {
    return source == o.source && elements == o.elements && detects == o.detects;
  }

  EomFrequencies eom_frequencies() const {
    EomFrequencies f;
    for (const auto& e : elements) {
      if (const auto* eom = std::get_if<EomSpec>(&e)) f[eom->id] = eom->omega_ghz;
    }
    return f;
  }

  std::vector<EomSpec> eoms() const {
    std::vector<EomSpec> out;
    for (const auto& e : elements) {
      if (const auto* eom = std::get_if<EomSpec>(&e)) out.push_back(*eom);
    }
    return out;
  }

  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < elements.size(); ++i) {
      if (element_id(elements[i]) == id) return i;
    }
    return std::nullopt;
  }

  bool is_detect(const std::string& wire) const {
    return std::find(detects.begin(), detects.end(), wire) != detects.end();
  }

  bool has_blocks() const {
    return std::any_of(elements.begin(), elements.end(), [](const Element& e) {
      return std::holds_alternative<BlockSpec>(e);
    });
  }
};

// ---------------------------------------------------------------------------
// Diagnostics

enum class DiagCode {
  kUnknownKeyword,
  kArityMismatch,
  kBadValue,
  kDuplicateId,
  kDuplicateDriver,
  kDuplicateReader,
  kUndrivenWire,
  kCycle,
  kUnreachableDetect,
  kDetectNotSink,
  kMissingSource,
  kReflectivityRange,
  kEomRange,
  kNotTopological,
};

inline const char* to_string(DiagCode c) {
  switch (c) {
    case DiagCode::kUnknownKeyword: return "UNKNOWN_KEYWORD";
    case DiagCode::kArityMismatch: return "ARITY_MISMATCH";
    case DiagCode::kBadValue: return "BAD_VALUE";
    case DiagCode::kDuplicateId: return "DUPLICATE_ID";
    case DiagCode::kDuplicateDriver: return "DUPLICATE_DRIVER";
    case DiagCode::kDuplicateReader: return "DUPLICATE_READER";
    case DiagCode::kUndrivenWire: return "UNDRIVEN_WIRE";
    case DiagCode::kCycle: return "CYCLE";
    case DiagCode::kUnreachableDetect: return "UNREACHABLE_DETECT";
    case DiagCode::kDetectNotSink: return "DETECT_NOT_SINK";
    case DiagCode::kMissingSource: return "MISSING_SOURCE";
    case DiagCode::kReflectivityRange: return "REFLECTIVITY_RANGE";
    case DiagCode::kEomRange: return "EOM_RANGE";
    case DiagCode::kNotTopological: return "NOT_TOPOLOGICAL";
  }
  return "UNKNOWN";
}

struct Diagnostic {
  DiagCode code;
  SourcePos pos;
  std::string message;
};

inline std::string format_diagnostic(const Diagnostic& d, std::string_view file = "") {
  std::ostringstream os;
  if (!file.empty()) os << file << ":";
  os << d.pos.line << ":" << d.pos.column << ": " << to_string(d.code) << ": " << d.message;
  return os.str();
}

namespace detail {

inline SourcePos pos_of(const Circuit& c, std::size_t i) {
  return i < c.positions.size() ? c.positions[i] : SourcePos{};
}

// Writer/modifier/reader bookkeeping per wire. Node indices are element
// indices; kSourceNode marks the source.
inline constexpr std::size_t kSourceNode = static_cast<std::size_t>(-1);

struct WireUse {
  std::vector<std::size_t> writers;
  std::vector<std::size_t> modifiers;
  std::vector<std::size_t> readers;
  bool detected = false;
};

struct Analysis {
  std::map<std::string, WireUse> wires;
  std::vector<Diagnostic> diags;
  std::vector<std::size_t> order;  // topological order of element indices
  std::optional<std::size_t> out_of_order;  // first element evaluated before a predecessor
};

inline Analysis analyze(const Circuit& c) {
  Analysis a;
  auto& diags = a.diags;
  const std::size_t n = c.elements.size();

  if (c.source.empty()) {
    diags.push_back({DiagCode::kMissingSource, {}, "circuit has no source"});
  } else {
    a.wires[c.source].writers.push_back(kSourceNode);
  }
  if (c.detects.empty()) {
    diags.push_back({DiagCode::kArityMismatch, {}, "circuit has no detect wire"});
  }

  std::set<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = c.elements[i];
    const auto pos = pos_of(c, i);
    if (!ids.insert(element_id(e)).second) {
      diags.push_back({DiagCode::kDuplicateId, pos, "duplicate element id '" + element_id(e) + "'"});
    }
    if (const auto* bs = std::get_if<BeamSplitterSpec>(&e)) {
      if (!(bs->reflectivity >= 0.0 && bs->reflectivity <= 1.0)) {
        diags.push_back({DiagCode::kReflectivityRange, pos,
                         "beam splitter '" + bs->id + "' reflectivity outside [0,1]"});
      }
      if (bs->in.empty() || bs->in.size() > 2 || bs->out.size() != 2) {
        diags.push_back({DiagCode::kArityMismatch, pos,
                         "beam splitter '" + bs->id + "' needs 1-2 inputs and 2 outputs"});
      }
      for (const auto& w : bs->in) a.wires[w].readers.push_back(i);
      for (const auto& w : bs->out) a.wires[w].writers.push_back(i);
    } else {
      if (const auto* eom = std::get_if<EomSpec>(&e)) {
        if (!(eom->omega_ghz > 0.0) || !(eom->depth >= 0.0 && eom->depth < 1.0) || eom->order < 1) {
          diags.push_back({DiagCode::kEomRange, pos,
                           "EOM '" + eom->id + "' needs omega_ghz > 0, 0 <= depth < 1, order >= 1"});
        }
      }
      a.wires[element_inputs(e).front()].modifiers.push_back(i);
    }
  }
  auto detect_pos = [&](std::size_t k) {
    return k < c.detect_positions.size() ? c.detect_positions[k] : SourcePos{};
  };
  for (std::size_t k = 0; k < c.detects.size(); ++k) {
    const auto& w = c.detects[k];
    auto& use = a.wires[w];
    if (use.detected) {
      diags.push_back({DiagCode::kDuplicateReader, detect_pos(k), "wire '" + w + "' detected twice"});
    }
    use.detected = true;
  }

  // Wiring rules.
  for (const auto& [name, use] : a.wires) {
    if (use.writers.size() > 1) {
      const std::size_t second = use.writers[1];
      diags.push_back({DiagCode::kDuplicateDriver,
                       second == kSourceNode ? SourcePos{} : pos_of(c, second),
                       "wire '" + name + "' has more than one writer"});
    }
    if (use.readers.size() > 1) {
      diags.push_back({DiagCode::kDuplicateReader, pos_of(c, use.readers[1]),
                       "wire '" + name + "' is read by more than one element"});
    }
    if (use.detected && !use.readers.empty()) {
      diags.push_back({DiagCode::kDetectNotSink, pos_of(c, use.readers[0]),
                       "detect wire '" + name + "' is read by an element"});
    }
    if (use.writers.empty() && !use.detected) {
      const std::size_t at = !use.readers.empty() ? use.readers[0] : use.modifiers[0];
      diags.push_back({DiagCode::kUndrivenWire, pos_of(c, at),
                       "wire '" + name + "' is used but never written"});
    }
  }

  // Dependency graph: writer -> modifiers (file order) -> reader.
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<int> indeg(n, 0);
  auto edge = [&](std::size_t from, std::size_t to) {
    if (from == kSourceNode || to == kSourceNode || from == to) return;
    if (from > to && (!a.out_of_order || to < *a.out_of_order)) a.out_of_order = to;
    succ[from].push_back(to);
    ++indeg[to];
  };
  for (const auto& [name, use] : a.wires) {
    std::vector<std::size_t> chain;
    if (!use.writers.empty()) chain.push_back(use.writers[0]);
    chain.insert(chain.end(), use.modifiers.begin(), use.modifiers.end());
    if (!use.readers.empty()) chain.push_back(use.readers[0]);
    for (std::size_t k = 1; k < chain.size(); ++k) edge(chain[k - 1], chain[k]);
  }

  // Kahn's algorithm, lowest file index first so file order is kept when free.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.insert(i);
  }
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    a.order.push_back(i);
    for (std::size_t j : succ[i]) {
      if (--indeg[j] == 0) ready.insert(j);
    }
  }
  if (a.order.size() != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (indeg[i] > 0) {
        diags.push_back({DiagCode::kCycle, pos_of(c, i),
                         "element '" + element_id(c.elements[i]) + "' is part of a cycle"});
        break;
      }
    }
    return a;
  }

  // Reachability from the source along the wiring.
  if (!c.source.empty()) {
    std::set<std::string> live{c.source};
    for (std::size_t i : a.order) {
      const auto* bs = std::get_if<BeamSplitterSpec>(&c.elements[i]);
      if (bs == nullptr) continue;
      const bool fed = std::any_of(bs->in.begin(), bs->in.end(),
                                   [&](const std::string& w) { return live.count(w) > 0; });
      if (fed) live.insert(bs->out.begin(), bs->out.end());
    }
    for (std::size_t k = 0; k < c.detects.size(); ++k) {
      const auto& w = c.detects[k];
      if (live.count(w) == 0) {
        diags.push_back({DiagCode::kUnreachableDetect, detect_pos(k),
                         "detect wire '" + w + "' is not reachable from the source"});
      }
    }
  }
  return a;
}

}  // namespace detail

// Re-checks every circuit invariant; empty iff valid.
inline std::vector<Diagnostic> validate_circuit(const Circuit& c) {
  auto a = detail::analyze(c);
  if (a.diags.empty() && a.out_of_order) {
    a.diags.push_back({DiagCode::kNotTopological, detail::pos_of(c, *a.out_of_order),
                       "element '" + element_id(c.elements[*a.out_of_order]) +
                           "' comes before an element it depends on"});
  }
  return a.diags;
}

// Validates and reorders elements topologically (stable w.r.t. current order).
inline std::vector<Diagnostic> finalize_circuit(Circuit& c) {
  auto a = detail::analyze(c);
  if (!a.diags.empty()) return a.diags;
  Circuit sorted;
  sorted.source = c.source;
  sorted.detects = c.detects;
  sorted.detect_positions = c.detect_positions;
  for (std::size_t i : a.order) {
    sorted.elements.push_back(c.elements[i]);
    sorted.positions.push_back(detail::pos_of(c, i));
  }
  c = std::move(sorted);
  return {};
}

// ---------------------------------------------------------------------------
// Parsing

struct ParseResult {
  std::optional<Circuit> circuit;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return circuit.has_value() && diagnostics.empty(); }
};

namespace detail {

struct Token {
  std::string text;
  int column;
};

inline std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({std::string(line.substr(start, i - start)), static_cast<int>(start) + 1});
  }
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  // from_chars for double is available in libstdc++ 11.
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t k = s.find(sep, start);
    out.emplace_back(s.substr(start, k == std::string_view::npos ? s.npos : k - start));
    if (k == std::string_view::npos) break;
    start = k + 1;
  }
  return out;
}

inline bool valid_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  });
}

}  // namespace detail

// Total: never throws on malformed input; every problem becomes a diagnostic.
inline ParseResult parse_netlist(std::string_view text) {
  using detail::Token;
  ParseResult result;
  auto& diags = result.diagnostics;
  Circuit c;
  std::optional<SourcePos> source_pos;

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto tokens = detail::tokenize(line);
    if (tokens.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const Token& kw = tokens[0];
    const SourcePos kw_pos{line_no, kw.column};
    auto diag = [&](DiagCode code, int column, std::string msg) {
      diags.push_back({code, {line_no, column}, std::move(msg)});
    };

    if (kw.text == "source" || kw.text == "detect") {
      if (tokens.size() != 2 || !detail::valid_name(tokens[1].text)) {
        diag(DiagCode::kArityMismatch, kw.column, "'" + kw.text + "' takes exactly one wire name");
        continue;
      }
      if (kw.text == "source") {
        if (source_pos) {
          diag(DiagCode::kDuplicateDriver, kw.column, "second 'source' line");
          continue;
        }
        c.source = tokens[1].text;
        source_pos = kw_pos;
      } else {
        c.detects.push_back(tokens[1].text);
        c.detect_positions.push_back(kw_pos);
      }
      continue;
    }

    if (kw.text != "bs" && kw.text != "phase" && kw.text != "eom" && kw.text != "block") {
      diag(DiagCode::kUnknownKeyword, kw.column, "unknown keyword '" + kw.text + "'");
      continue;
    }
    if (tokens.size() < 2 || tokens[1].text.find('=') != std::string::npos ||
        !detail::valid_name(tokens[1].text)) {
      diag(DiagCode::kArityMismatch, kw.column, "'" + kw.text + "' needs an element id");
      continue;
    }
    const std::string id = tokens[1].text;

    std::map<std::string, Token> kv;
    bool bad = false;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto eq = tokens[t].text.find('=');
      if (eq == std::string::npos || eq == 0) {
        diag(DiagCode::kArityMismatch, tokens[t].column, "expected key=value, got '" + tokens[t].text + "'");
        bad = true;
        continue;
      }
      const std::string key = tokens[t].text.substr(0, eq);
      Token value{tokens[t].text.substr(eq + 1), tokens[t].column + static_cast<int>(eq) + 1};
      if (!kv.emplace(key, value).second) {
        diag(DiagCode::kArityMismatch, tokens[t].column, "repeated key '" + key + "'");
        bad = true;
      }
    }
    if (bad) continue;

    auto allowed = [&](std::initializer_list<const char*> keys) {
      bool ok = true;
      for (const auto& [key, tok] : kv) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
          diag(DiagCode::kArityMismatch, tok.column - static_cast<int>(key.size()) - 1,
               "unexpected key '" + key + "' for '" + kw.text + "'");
          ok = false;
        }
      }
      return ok;
    };
    auto require = [&](const char* key) -> const Token* {
      auto it = kv.find(key);
      if (it == kv.end()) {
        diag(DiagCode::kArityMismatch, kw.column, "'" + kw.text + "' is missing " + key + "=");
        return nullptr;
      }
      return &it->second;
    };
    auto number = [&](const Token* tok) -> std::optional<double> {
      if (tok == nullptr) return std::nullopt;
      auto v = detail::to_double(tok->text);
      if (!v) diag(DiagCode::kBadValue, tok->column, "not a number: '" + tok->text + "'");
      return v;
    };
    auto wire_of = [&](const Token* tok) -> std::optional<std::string> {
      if (tok == nullptr) return std::nullopt;
      if (!detail::valid_name(tok->text)) {
        diag(DiagCode::kBadValue, tok->column, "bad wire name '" + tok->text + "'");
        return std::nullopt;
      }
      return tok->text;
    };

    if (kw.text == "bs") {
      if (!allowed({"in", "out", "r", "ratio"})) continue;
      const Token* in = require("in");
      const Token* out = require("out");
      if (in == nullptr || out == nullptr) continue;
      BeamSplitterSpec bs;
      bs.id = id;
      bs.in = detail::split(in->text, ',');
      bs.out = detail::split(out->text, ',');
      if (bs.in.empty() || bs.in.size() > 2) {
        diag(DiagCode::kArityMismatch, in->column, "beam splitter takes one or two inputs");
        continue;
      }
      if (bs.out.size() != 2) {
        diag(DiagCode::kArityMismatch, out->column, "beam splitter takes exactly two outputs");
        continue;
      }
      bool names_ok = true;
      for (const auto* list : {&bs.in, &bs.out}) {
        for (const auto& w : *list) names_ok = names_ok && detail::valid_name(w);
      }
      if (!names_ok || bs.out[0] == bs.out[1] || (bs.in.size() == 2 && bs.in[0] == bs.in[1])) {
        diag(DiagCode::kBadValue, in->column, "beam splitter wire list is malformed");
        continue;
      }
      const bool has_r = kv.count("r") > 0;
      const bool has_ratio = kv.count("ratio") > 0;
      if (has_r == has_ratio) {
        diag(DiagCode::kArityMismatch, kw.column, "beam splitter needs exactly one of r= or ratio=");
        continue;
      }
      if (has_r) {
        const Token& tok = kv.at("r");
        auto r = number(&tok);
        if (!r) continue;
        if (!(*r >= 0.0 && *r <= 1.0)) {
          diag(DiagCode::kReflectivityRange, tok.column, "reflectivity " + tok.text + " outside [0,1]");
          continue;
        }
        bs.reflectivity = *r;
      } else {
        const Token& tok = kv.at("ratio");
        const auto parts = detail::split(tok.text, ':');
        std::optional<int> a, b;
        if (parts.size() == 2) {
          a = detail::to_int(parts[0]);
          b = detail::to_int(parts[1]);
        }
        if (!a || !b || *a < 0 || *b < 0 || *a + *b == 0) {
          diag(DiagCode::kBadValue, tok.column, "ratio must be <int>:<int> with a positive sum");
          continue;
        }
        bs.reflectivity = static_cast<double>(*a) / static_cast<double>(*a + *b);
      }
      c.elements.emplace_back(std::move(bs));
    } else if (kw.text == "phase") {
      if (!allowed({"wire", "phi"})) continue;
      auto wire = wire_of(require("wire"));
      auto phi = number(require("phi"));
      if (!wire || !phi) continue;
      c.elements.emplace_back(PhaseShifterSpec{id, *wire, *phi});
    } else if (kw.text == "eom") {
      if (!allowed({"wire", "omega_ghz", "depth", "order"})) continue;
      auto wire = wire_of(require("wire"));
      const Token* omega_tok = require("omega_ghz");
      const Token* depth_tok = require("depth");
      auto omega = number(omega_tok);
      auto depth = number(depth_tok);
      if (!wire || !omega || !depth) continue;
      int order = kDefaultEomOrder;
      if (auto it = kv.find("order"); it != kv.end()) {
        auto o = detail::to_int(it->second.text);
        if (!o) {
          diag(DiagCode::kBadValue, it->second.column, "order must be an integer");
          continue;
        }
        order = *o;
        if (order < 1) {
          diag(DiagCode::kEomRange, it->second.column, "order must be >= 1");
          continue;
        }
      }
      if (!(*omega > 0.0)) {
        diag(DiagCode::kEomRange, omega_tok->column, "omega_ghz must be positive");
        continue;
      }
      if (!(*depth >= 0.0 && *depth < 1.0)) {
        diag(DiagCode::kEomRange, depth_tok->column, "depth must lie in [0,1)");
        continue;
      }
      c.elements.emplace_back(EomSpec{id, *wire, *omega, *depth, order});
    } else {  // block
      if (!allowed({"wire"})) continue;
      auto wire = wire_of(require("wire"));
      if (!wire) continue;
      c.elements.emplace_back(BlockSpec{id, *wire});
    }
    c.positions.push_back(kw_pos);
  }

  if (!diags.empty()) return result;
  auto structural = finalize_circuit(c);
  if (!structural.empty()) {
    diags = std::move(structural);
    return result;
  }
  result.circuit = std::move(c);
  return result;
}

// Canonical text form; parse_netlist(format_netlist(c)) == c.
inline std::string format_netlist(const Circuit& c) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto join = [](const std::vector<std::string>& ws) {
    std::string s;
    for (const auto& w : ws) s += (s.empty() ? "" : ",") + w;
    return s;
  };
  std::ostringstream os;
  os << "source " << c.source << "\n";
  for (const auto& e : c.elements) {
    std::visit([&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, BeamSplitterSpec>) {
        os << "bs " << s.id << " in=" << join(s.in) << " out=" << join(s.out)
           << " r=" << num(s.reflectivity) << "\n";
      } else if constexpr (std::is_same_v<T, PhaseShifterSpec>) {
        os << "phase " << s.id << " wire=" << s.wire << " phi=" << num(s.phi) << "\n";
      } else if constexpr (std::is_same_v<T, EomSpec>) {
        os << "eom " << s.id << " wire=" << s.wire << " omega_ghz=" << num(s.omega_ghz)
           << " depth=" << num(s.depth) << " order=" << s.order << "\n";
      } else {
        os << "block " << s.id << " wire=" << s.wire << "\n";
      }
    }, e);
  }
  for (const auto& d : c.detects) os << "detect " << d << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Propagation

struct PropagationResult {
  std::map<std::string, PhotonState> outputs;  // per detect wire
  double absorbed = 0.0;                       // norm removed by blocks
  double undetected = 0.0;                     // norm left on unread, undetected wires
};

inline void require_valid(const Circuit& c) {
  const auto diags = validate_circuit(c);
  if (!diags.empty()) {
    throw ConfigError("invalid circuit: " + format_diagnostic(diags.front()));
  }
}

// Applies the elements in order (elements must already be topologically
// sorted, as produced by parse_netlist / finalize_circuit).
inline PropagationResult propagate(const Circuit& c, PhotonState state,
                                   const PropagationOptions& opts = {}) {
  require_valid(c);
  for (const auto& [mode, a] : state.amplitudes()) {
    if (mode.wire != c.source) throw ConfigError("input state must live on the source wire");
  }
  state.set_prune_threshold(opts.prune_threshold);
  PropagationResult result;
  for (const auto& e : c.elements) {
    std::visit([&](const auto& spec) {
      using T = std::decay_t<decltype(spec)>;
      if constexpr (std::is_same_v<T, BeamSplitterSpec>) {
        state = apply_beam_splitter(std::move(state), spec);
      } else if constexpr (std::is_same_v<T, PhaseShifterSpec>) {
        state = apply_phase(std::move(state), spec);
      } else if constexpr (std::is_same_v<T, EomSpec>) {
        state = apply_eom(std::move(state), spec, opts);
      } else {
        result.absorbed += norm_squared(state, spec.wire);
        state = apply_block(std::move(state), spec);
      }
    }, e);
  }
  for (const auto& d : c.detects) result.outputs.emplace(d, state.restricted_to(d));
  for (const auto& [mode, a] : state.amplitudes()) {
    if (!c.is_detect(mode.wire)) result.undetected += std::norm(a);
  }
  return result;
}

inline PropagationResult propagate(const Circuit& c, const PropagationOptions& opts = {}) {
  return propagate(c, PhotonState::single(c.source), opts);
}

}  // namespace pathmark
