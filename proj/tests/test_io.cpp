// Copyright 2026 The bbmlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "bbmlab/io.hpp"

namespace bbmlab {
namespace {

TEST(Fmt17, RoundTripsExactly) {
  Stream s(1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double x = (s.uniform() - 0.5) * std::pow(10.0, static_cast<int>(s.uniform() * 40) - 20);
    EXPECT_EQ(std::strtod(fmt17(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
  EXPECT_EQ(fmt17(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(fmt17(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(fmt17(std::nan("")), "nan");
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const auto c = Config::parse_text("# header\n horizon = 12 \nseed=7 # trailing\n\nq = 0.5\nseed=9\n");
  EXPECT_EQ(c.real("horizon", 0.0), 12.0);
  EXPECT_EQ(c.unsigned_integer("seed", 0), 9u);
  EXPECT_EQ(c.str("q", ""), "0.5");
  EXPECT_EQ(c.str("missing", "dflt"), "dflt");
  EXPECT_THROW(c.require("missing"), ConfigError);
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse_text("novalue\n"), ConfigError);
  EXPECT_THROW(Config::parse_text("=3\n"), ConfigError);
  const auto c = Config::parse_text("a=1.5x\nb=yes\nc=maybe\nd=-3\n");
  EXPECT_THROW(c.real("a", 0.0), ConfigError);
  EXPECT_TRUE(c.boolean("b", false));
  EXPECT_THROW(c.boolean("c", false), ConfigError);
  EXPECT_EQ(c.integer("d", 0), -3);
  EXPECT_THROW(c.unsigned_integer("d", 0), ConfigError);
  EXPECT_THROW(Config::load("/nonexistent/bbmlab.cfg"), IoError);
}

TEST(Config, OverridesWinAndHashIsCanonical) {
  auto a = Config::parse_text("x=1\ny=2\n");
  const auto b = Config::parse_text("y=2\nx=1\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.canonical(), "x=1\ny=2\n");
  a.apply({"x=3"});
  EXPECT_EQ(a.real("x", 0.0), 3.0);
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_THROW(a.apply({"bad"}), ConfigError);
  EXPECT_EQ(Config::parse_text("r=1,2, 3\n").reals("r", {}), (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(JsonWriter, ParsesBackExactly) {
  JsonWriter w;
  const double third = 1.0 / 3.0;
  w.begin_object()
      .field("a", third)
      .field("s", "q\"uote\n")
      .field("b", true)
      .field("n", std::uint64_t{18446744073709551615ULL})
      .array("v", std::vector<double>{1e-300, -2.5})
      .field("inf", std::numeric_limits<double>::infinity())
      .key("nested")
      .begin_object()
      .field("k", -1)
      .end_object()
      .end_object();
  const auto j = nlohmann::json::parse(w.str());
  EXPECT_EQ(j.at("a").get<double>(), third);
  EXPECT_EQ(j.at("s").get<std::string>(), "q\"uote\n");
  EXPECT_EQ(j.at("n").get<std::uint64_t>(), 18446744073709551615ULL);
  EXPECT_EQ(j.at("v")[0].get<double>(), 1e-300);
  EXPECT_EQ(json_real(j.at("inf")), std::numeric_limits<double>::infinity());
  EXPECT_EQ(j.at("nested").at("k").get<int>(), -1);
}

TEST(TreeFile, RoundTrip) {
  SimConfig c;
  c.horizon = 5.0;
  c.seed = 33;
  c.barrier_offset = 4.0;
  const auto tree = simulate_tree(c);
  std::stringstream ss;
  write_tree(ss, tree, 0x1234);
  const auto back = read_tree(ss);
  EXPECT_TRUE(back == tree);
  EXPECT_EQ(back.leaves(), tree.leaves());
  EXPECT_EQ(back.barrier_offset(), tree.barrier_offset());
  EXPECT_EQ(back.offspring(), tree.offspring());
}

TEST(TreeFile, HeaderAndNodeLines) {
  SimConfig c;
  c.horizon = 2.0;
  c.seed = 1;
  const auto tree = simulate_tree(c);
  std::stringstream ss;
  write_tree(ss, tree, 0xfeed);
  std::string line;
  std::getline(ss, line);
  const auto h = nlohmann::json::parse(line);
  EXPECT_EQ(h.at("config_hash").get<std::string>(), hex64(0xfeed));
  EXPECT_EQ(h.at("seed").get<std::uint64_t>(), 1u);
  EXPECT_TRUE(h.at("barrier_offset").is_null());
  std::getline(ss, line);
  const auto root = nlohmann::json::parse(line);
  EXPECT_EQ(root.at("id").get<int>(), 0);
  EXPECT_EQ(root.at("parent").get<int>(), -1);
}

TEST(TreeFile, RejectsMalformedInput) {
  std::stringstream empty;
  EXPECT_THROW(read_tree(empty), IoError);
  std::stringstream bad("{\"type\":\"header\",\"horizon\":1,\"seed\":0,\"offspring\":[0,1],\"barrier_offset\":null,"
                        "\"pruned_count\":0,\"node_count\":2}\n"
                        "{\"id\":0,\"parent\":-1,\"birth_time\":0,\"end_time\":1,\"birth_position\":0,"
                        "\"end_position\":0.5,\"pruned\":false}\n");
  EXPECT_THROW(read_tree(bad), IoError);
  std::stringstream broken("{not json\n");
  EXPECT_THROW(read_tree(broken), IoError);
}

TEST(RecordFile, RoundTrip) {
  const auto cfg = Config::parse_text("horizon=6\n");
  std::vector<RunRecord> recs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    SimConfig c;
    c.horizon = 6.0;
    c.seed = s;
    recs.push_back(make_run_record(simulate_tree(c), 6.0, cfg.hash()));
  }
  std::stringstream ss;
  ss << record_header_line(cfg) << '\n';
  for (const auto& r : recs) ss << record_line(r) << '\n';
  const auto back = read_records(ss);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].z, recs[i].z);
    EXPECT_EQ(back[i].z2, recs[i].z2);
    EXPECT_EQ(back[i].max_centered, recs[i].max_centered);
    EXPECT_EQ(back[i].leaf_count, recs[i].leaf_count);
    EXPECT_EQ(back[i].config_hash, cfg.hash());
  }
  std::stringstream headless(record_line(recs[0]) + "\n");
  EXPECT_THROW(read_records(headless), IoError);
}

TEST(ThinnedFile, RoundTrip) {
  ThinnedProcess t;
  t.positions = {1.0 / 3.0, -0.25};
  t.selected_indices = {0, 4};
  t.q = 0.5;
  t.horizon = 12.0;
  std::stringstream ss(thinned_json(t, 9, 0.7, -4.0, 0x1) + "\n");
  const auto back = read_thinned(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].seed, 9u);
  EXPECT_EQ(back[0].run.points, t.positions);
  EXPECT_EQ(back[0].run.z, 0.7);
  EXPECT_EQ(back[0].run.floor, -4.0);
}

TEST(PointSampleFile, CsvHasHeaderAndRows) {
  const auto s = sample_exponential_ppp(5.0, 0.0, 3);
  const auto csv = point_sample_csv(s, 0x42);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,point,seed,config_hash");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, s.points.size());
  const auto side = nlohmann::json::parse(point_sample_sidecar(s, 0x42));
  EXPECT_EQ(side.at("kind").get<std::string>(), "ppp");
  EXPECT_EQ(side.at("point_count").get<std::size_t>(), s.points.size());
}

TEST(Reports, JsonAndText) {
  TestReport t;
  t.name = "ks";
  t.statistic = 0.1;
  t.p_value = 0.5;
  t.passed = true;
  t.extra = {{"x", 2.0}};
  TestReport u;
  u.name = "empty";
  const auto j = nlohmann::json::parse(reports_json({t, u}, 0x5, 7));
  EXPECT_EQ(j.at("tests").size(), 2u);
  EXPECT_EQ(j.at("tests")[0].at("extra").at("x").get<double>(), 2.0);
  EXPECT_EQ(j.at("tests")[1].at("p_value").get<std::string>(), "nan");
  const auto text = reports_text({t, u}, 0x5, 7);
  EXPECT_NE(text.find("PASS ks"), std::string::npos);
  EXPECT_NE(text.find("FAIL empty"), std::string::npos);
}

}  // namespace
}  // namespace bbmlab
