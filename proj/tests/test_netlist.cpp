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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pathmark/experiments.hpp"
#include "pathmark/netlist.hpp"

namespace pathmark {
namespace {

std::vector<DiagCode> codes(const std::vector<Diagnostic>& diags) {
  std::vector<DiagCode> out;
  for (const auto& d : diags) out.push_back(d.code);
  return out;
}

std::vector<DiagCode> parse_codes(std::string_view text) { return codes(parse_netlist(text).diagnostics); }

TEST(Parse, MinimalIdentityCircuit) {
  const auto r = parse_netlist("source a\ndetect a\n");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.circuit->source, "a");
  EXPECT_TRUE(r.circuit->elements.empty());
  EXPECT_EQ(r.circuit->detects, std::vector<std::string>{"a"});
}

TEST(Parse, CommentsBlankLinesAndCrlf) {
  const auto r = parse_netlist("# header\r\n\r\nsource a   # trailing\r\nphase p wire=a phi=0.5\r\ndetect a");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.circuit->elements.size(), 1u);
  EXPECT_DOUBLE_EQ(std::get<PhaseShifterSpec>(r.circuit->elements[0]).phi, 0.5);
}

TEST(Parse, ConfigBReferenceNetlist) {
  const auto r = parse_netlist(reference_netlist(ReferenceConfig::kB, {}));
  ASSERT_TRUE(r.ok());
  const auto& c = *r.circuit;
  EXPECT_EQ(c.elements.size(), 11u);  // 4 splitters, 5 modulators, 2 phases
  const auto f = c.eom_frequencies();
  ASSERT_EQ(f.size(), 5u);
  EXPECT_DOUBLE_EQ(f.at("A"), 2.8);
  EXPECT_DOUBLE_EQ(f.at("B"), 1.6);
  EXPECT_DOUBLE_EQ(f.at("C"), 2.1);
  EXPECT_DOUBLE_EQ(f.at("E"), 1.0);
  EXPECT_DOUBLE_EQ(f.at("F"), 3.4);
  const auto splitters = std::count_if(c.elements.begin(), c.elements.end(), [](const Element& e) {
    return std::holds_alternative<BeamSplitterSpec>(e);
  });
  EXPECT_EQ(splitters, 4);
}

TEST(Parse, RatioSugar) {
  const auto r = parse_netlist("source in\nbs b in=in out=x,y ratio=1:2\ndetect x\ndetect y\n");
  ASSERT_TRUE(r.ok());
  EXPECT_DOUBLE_EQ(std::get<BeamSplitterSpec>(r.circuit->elements[0]).reflectivity, 1.0 / 3.0);
}

TEST(Parse, ReflectivityRangeAtValueToken) {
  const auto r = parse_netlist("source in\nbs b1 in=in out=x,y r=1.5\ndetect x\ndetect y\n");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].code, DiagCode::kReflectivityRange);
  EXPECT_EQ(r.diagnostics[0].pos.line, 2);
  EXPECT_EQ(r.diagnostics[0].pos.column, 23);  // the "1.5" after "r="
  EXPECT_FALSE(r.ok());
}

TEST(Parse, DistinctCodes) {
  EXPECT_EQ(parse_codes("source a\nmirror m wire=a\ndetect a\n"), std::vector{DiagCode::kUnknownKeyword});
  EXPECT_EQ(parse_codes("source a\nphase p wire=a\ndetect a\n"), std::vector{DiagCode::kArityMismatch});
  EXPECT_EQ(parse_codes("source a\nphase p wire=a phi=abc\ndetect a\n"), std::vector{DiagCode::kBadValue});
  EXPECT_EQ(parse_codes("source a\neom E wire=a omega_ghz=1 depth=1.2\ndetect a\n"),
            std::vector{DiagCode::kEomRange});
  EXPECT_EQ(parse_codes("source a\nphase p wire=a phi=0\nphase p wire=a phi=1\ndetect a\n"),
            std::vector{DiagCode::kDuplicateId});
  EXPECT_EQ(parse_codes("source in\nbs s in=in out=x,y r=0.5\nbs t in=y out=x,z r=0.5\ndetect x\ndetect z\n"),
            std::vector{DiagCode::kDuplicateDriver});
  EXPECT_EQ(parse_codes("source in\nbs s in=in out=x,y r=0.5\ndetect x\ndetect y\ndetect q\n"),
            std::vector{DiagCode::kUnreachableDetect});
  const auto no_source = parse_codes("detect a\n");
  EXPECT_NE(std::find(no_source.begin(), no_source.end(), DiagCode::kMissingSource), no_source.end());
}

TEST(Parse, CycleDetected) {
  const auto c = parse_codes(
      "source in\n"
      "bs s in=in,r out=x,y r=0.5\n"
      "bs t in=y out=r,z r=0.5\n"
      "detect x\ndetect z\n");
  EXPECT_NE(std::find(c.begin(), c.end(), DiagCode::kCycle), c.end());
}

TEST(Parse, DetectMustBeSink) {
  const auto c = parse_codes("source in\nbs s in=in out=x,y r=0.5\ndetect in\ndetect x\ndetect y\n");
  EXPECT_NE(std::find(c.begin(), c.end(), DiagCode::kDetectNotSink), c.end());
}

TEST(Parse, NeverThrowsOnGarbage) {
  for (std::string_view text : {"", "=", "bs", "bs =", "bs b in= out=,", "eom e wire=a omega_ghz=1e999 depth=-0",
                                "source\n\n\n", "bs b in=a,b,c out=x r=0.5", "phase p wire=a phi=nan",
                                "\xff\xfe", "block", "detect a b", "source a\nsource b"}) {
    EXPECT_NO_THROW(parse_netlist(text));
    EXPECT_FALSE(parse_netlist(text).ok()) << text;
  }
}

TEST(Parse, ElementsSortedTopologically) {
  const auto r = parse_netlist(
      "source in\n"
      "bs late in=y out=p,q r=0.5\n"
      "bs early in=in out=x,y r=0.5\n"
      "detect x\ndetect p\ndetect q\n");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(element_id(r.circuit->elements[0]), "early");
  EXPECT_EQ(r.circuit->positions[0].line, 3);
}

TEST(Validate, ReferenceConfigAIsClean) {
  EXPECT_TRUE(validate_circuit(build_reference(ReferenceConfig::kA)).empty());
}

TEST(Validate, TwoWritersOnOneWire) {
  Circuit c;
  c.source = "in";
  c.elements = {BeamSplitterSpec{"s", {"in"}, {"x", "y"}, 0.5}, BeamSplitterSpec{"t", {"y"}, {"x", "z"}, 0.5}};
  c.detects = {"x", "z"};
  EXPECT_EQ(codes(validate_circuit(c)), std::vector{DiagCode::kDuplicateDriver});
}

TEST(Validate, UnreachableDetector) {
  Circuit c;
  c.source = "in";
  c.elements = {BeamSplitterSpec{"s", {"in"}, {"x", "y"}, 0.5}};
  c.detects = {"x", "y", "elsewhere"};
  EXPECT_EQ(codes(validate_circuit(c)), std::vector{DiagCode::kUnreachableDetect});
}

TEST(Validate, EvaluationOrderMustBeTopological) {
  Circuit c;
  c.source = "in";
  c.elements = {BeamSplitterSpec{"t", {"y"}, {"p", "q"}, 0.5}, BeamSplitterSpec{"s", {"in"}, {"x", "y"}, 0.5}};
  c.detects = {"x", "p", "q"};
  EXPECT_EQ(codes(validate_circuit(c)), std::vector{DiagCode::kNotTopological});
  EXPECT_THROW(propagate(c), ConfigError);
  EXPECT_TRUE(finalize_circuit(c).empty());
  EXPECT_TRUE(validate_circuit(c).empty());
}

TEST(Format, RoundTripsReferenceCircuits) {
  for (auto cfg : {ReferenceConfig::kA, ReferenceConfig::kB, ReferenceConfig::kC, ReferenceConfig::kFig3}) {
    ReferenceParams p;
    p.epsilon = 0.0123456789;
    const Circuit c = build_reference(cfg, p);
    const auto again = parse_netlist(format_netlist(c));
    ASSERT_TRUE(again.ok());
    EXPECT_EQ(*again.circuit, c);
  }
}

TEST(Diagnostic, Format) {
  const Diagnostic d{DiagCode::kCycle, {3, 7}, "loop"};
  EXPECT_EQ(format_diagnostic(d, "x.net"), "x.net:3:7: CYCLE: loop");
}

TEST(Propagate, IdentityCircuitReturnsInput) {
  const auto c = *parse_netlist("source a\ndetect a\n").circuit;
  PhotonState in;
  in.set({"a", {}}, Complex(0.6, 0.0));
  in.set({"a", {{"X", 1}}}, Complex(0.0, 0.8));
  const auto r = propagate(c, in);
  EXPECT_EQ(r.outputs.at("a"), in);
}

TEST(Propagate, BalancedMachZehnderDarkPort) {
  const auto c = *parse_netlist(
                      "source in\nbs a in=in out=u,l r=0.5\nphase pu wire=u phi=0\nphase pl wire=l phi=0\n"
                      "bs b in=u,l out=x,y r=0.5\ndetect x\ndetect y\n")
                      .circuit;
  const auto r = propagate(c);
  EXPECT_LT(norm_squared(r.outputs.at("x")), 1e-24);
  EXPECT_NEAR(norm_squared(r.outputs.at("y")), 1.0, 1e-15);
}

TEST(Propagate, InputMustLiveOnSource) {
  const auto c = *parse_netlist("source a\ndetect a\n").circuit;
  EXPECT_THROW(propagate(c, PhotonState::single("b")), ConfigError);
}

// Only the outer arm C delivers carrier to D in configuration b; bs4 sends
// r = 2/3 of C's 1/3 there.
TEST(Propagate, ConfigBBrightPortCarrier) {
  const auto r = propagate(build_reference(ReferenceConfig::kB));
  const auto& d = r.outputs.at("D");
  const double carrier = std::norm(d.amplitude({"D", {}}));
  const double m = kDefaultDepth;
  EXPECT_NEAR(carrier, 2.0 / 9.0, m * m);
  EXPECT_NEAR(norm_squared(d), 2.0 / 9.0, m * m);
  double total = r.absorbed + r.undetected;
  for (const auto& [w, s] : r.outputs) total += norm_squared(s);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Propagate, BlockedNormIsAccounted) {
  const auto r = propagate(build_reference(ReferenceConfig::kC, {.epsilon = 0.01}));
  EXPECT_NEAR(r.absorbed, 1.0 / 3.0, 1e-12);
  double detected = 0.0;
  for (const auto& [w, s] : r.outputs) detected += norm_squared(s);
  EXPECT_NEAR(detected + r.absorbed + r.undetected, 1.0, 1e-12);
}

}  // namespace
}  // namespace pathmark
