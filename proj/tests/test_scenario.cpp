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

#include <fstream>
#include <sstream>

#include "pathmark/scenario.hpp"

namespace pathmark {
namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const SchemaError* error_for(const ScenarioParse& p, const std::string& key) {
  for (const auto& e : p.errors) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

TEST(Scenario, MinimalUsesDefaults) {
  const auto p = parse_scenario("config = a\n");
  ASSERT_TRUE(p.errors.empty());
  const auto& sc = *p.scenario;
  EXPECT_EQ(sc.config, ReferenceConfig::kA);
  EXPECT_FALSE(sc.netlist);
  EXPECT_EQ(sc.detect, "D");
  EXPECT_DOUBLE_EQ(sc.params.depth, kDefaultDepth);
  EXPECT_DOUBLE_EQ(sc.scan.photons_per_point, kDefaultPhotonsPerPoint);
  EXPECT_DOUBLE_EQ(sc.k_sigma, kDefaultKSigma);
  EXPECT_EQ(sc.sweep_points, 16u);
}

TEST(Scenario, ReadsEveryGroup) {
  const auto p = parse_scenario(
      "# comment line\n"
      "config = c   # trailing comment\n"
      "epsilon = 0.02\n"
      "depth = 0.01\n"
      "envelope.shape = lorentzian\n"
      "envelope.fwhm_mhz = 200\n"
      "etalon.linewidth_mhz = 50\n"
      "etalon.fsr_ghz = 10\n"
      "scan.start_ghz = -1\n"
      "scan.stop_ghz = 3\n"
      "scan.step_ghz = 0.02\n"
      "scan.photons = 1e8\n"
      "scan.seed = 42\n"
      "scan.dark = 1e-9\n"
      "peaks.ksigma = 4\n"
      "sweep.points = 32\n");
  ASSERT_TRUE(p.errors.empty()) << format_schema_error(p.errors.front());
  const auto& sc = *p.scenario;
  EXPECT_DOUBLE_EQ(sc.params.epsilon, 0.02);
  EXPECT_DOUBLE_EQ(sc.params.depth, 0.01);
  EXPECT_EQ(sc.envelope.shape, EnvelopeShape::kLorentzian);
  EXPECT_DOUBLE_EQ(sc.envelope.fwhm_mhz, 200.0);
  EXPECT_DOUBLE_EQ(sc.etalon.linewidth_mhz, 50.0);
  EXPECT_DOUBLE_EQ(sc.etalon.fsr_ghz, 10.0);
  EXPECT_DOUBLE_EQ(sc.scan.start_ghz, -1.0);
  EXPECT_DOUBLE_EQ(sc.scan.stop_ghz, 3.0);
  EXPECT_DOUBLE_EQ(sc.scan.step_ghz, 0.02);
  EXPECT_DOUBLE_EQ(sc.scan.photons_per_point, 1e8);
  EXPECT_EQ(sc.scan.seed, 42u);
  EXPECT_DOUBLE_EQ(sc.scan.dark_probability, 1e-9);
  EXPECT_DOUBLE_EQ(sc.k_sigma, 4.0);
  EXPECT_EQ(sc.sweep_points, 32u);
}

TEST(Scenario, ErrorsCarryKeyPathAndLine) {
  const auto p = parse_scenario("config = a\nscan.step_ghz = fast\nscan.bogus = 1\n");
  EXPECT_FALSE(p.scenario);
  const auto* step = error_for(p, "scan.step_ghz");
  ASSERT_NE(step, nullptr);
  EXPECT_EQ(step->line, 2);
  EXPECT_EQ(format_schema_error(*step), "line 2: scan.step_ghz: expected a number");
  const auto* bogus = error_for(p, "scan.bogus");
  ASSERT_NE(bogus, nullptr);
  EXPECT_EQ(bogus->line, 3);
  EXPECT_EQ(bogus->message, "unknown key");
}

TEST(Scenario, AllErrorsReportedAtOnce) {
  const auto p = parse_scenario("depth = 2\nscan.photons = 0\nsweep.points = 3\n");
  EXPECT_FALSE(p.scenario);
  EXPECT_NE(error_for(p, "config"), nullptr);
  EXPECT_NE(error_for(p, "depth"), nullptr);
  EXPECT_NE(error_for(p, "scan.photons"), nullptr);
  EXPECT_NE(error_for(p, "sweep.points"), nullptr);
}

TEST(Scenario, ConfigAndNetlistAreExclusive) {
  EXPECT_NE(error_for(parse_scenario("config = a\nnetlist = x.net\n"), "config"), nullptr);
  EXPECT_NE(error_for(parse_scenario("scan.seed = 3\n"), "config"), nullptr);
  const auto p = parse_scenario("netlist = circuits/x.net\ndetect = out\n");
  ASSERT_TRUE(p.scenario);
  EXPECT_EQ(*p.scenario->netlist, "circuits/x.net");
  EXPECT_EQ(p.scenario->detect, "out");
}

TEST(Scenario, DuplicateKeyPointsAtFirstUse) {
  const auto p = parse_scenario("config = a\ndepth = 0.1\ndepth = 0.2\n");
  const auto* e = error_for(p, "depth");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->line, 3);
  EXPECT_NE(e->message.find("line 2"), std::string::npos);
}

TEST(Scenario, RangeChecks) {
  EXPECT_NE(error_for(parse_scenario("config = a\nscan.start_ghz = 2\nscan.stop_ghz = 1\n"), "scan.stop_ghz"),
            nullptr);
  EXPECT_NE(error_for(parse_scenario("config = a\nscan.dark = 1.5\n"), "scan.dark"), nullptr);
  EXPECT_NE(error_for(parse_scenario("config = a\netalon.linewidth_mhz = 9000\n"), "etalon.linewidth_mhz"),
            nullptr);
  EXPECT_NE(error_for(parse_scenario("config = q\n"), "config"), nullptr);
  EXPECT_NE(error_for(parse_scenario("config = a\nenvelope.shape = square\n"), "envelope.shape"), nullptr);
}

TEST(Scenario, MissingEqualsIsAnError) {
  const auto p = parse_scenario("config = a\njust some words\n");
  ASSERT_EQ(p.errors.size(), 1u);
  EXPECT_EQ(p.errors[0].line, 2);
}

TEST(Scenario, FormatRoundTrips) {
  const auto first = parse_scenario(
      "config = b\nepsilon = 0.0123456789012345\nscan.photons = 3.5e9\nscan.seed = 99\n"
      "envelope.fwhm_mhz = 314.159\npeaks.ksigma = 6\n");
  ASSERT_TRUE(first.scenario);
  const std::string text = format_scenario(*first.scenario);
  const auto second = parse_scenario(text);
  ASSERT_TRUE(second.scenario) << text;
  EXPECT_EQ(format_scenario(*second.scenario), text);
  EXPECT_DOUBLE_EQ(second.scenario->params.epsilon, 0.0123456789012345);
  EXPECT_EQ(second.scenario->scan.seed, 99u);
}

TEST(Scenario, ShippedScenariosParse) {
  for (const char* name : {"config_a", "config_b", "config_c", "fig3", "custom_netlist"}) {
    const auto p = parse_scenario(slurp(std::string(PATHMARK_SOURCE_DIR) + "/scenarios/" + name + ".scn"));
    EXPECT_TRUE(p.errors.empty()) << name << ": " << (p.errors.empty() ? "" : format_schema_error(p.errors[0]));
  }
}

}  // namespace
}  // namespace pathmark
