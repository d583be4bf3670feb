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

// Text formats: key=value configuration, a small JSON writer that prints
// every double with 17 significant digits, CSV helpers, and the tree and
// run-record files.

#ifndef BBMLAB_IO_HPP_
#define BBMLAB_IO_HPP_

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/error.hpp"
#include "bbmlab/genealogy.hpp"
#include "bbmlab/martingale.hpp"
#include "bbmlab/point_process.hpp"
#include "bbmlab/stats.hpp"

namespace bbmlab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string fmt17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// --- configuration ----------------------------------------------------------

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Flat key=value configuration. '#' starts a comment; later assignments win.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& origin = "<config>") {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
      }
      c.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return c;
  }

  static Config parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty configuration key");
    values_[key] = value;
  }

  /// Applies "key=value" overrides.
  void apply(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
      set(trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing configuration key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key, double fallback) const {
    return has(key) ? parse_real(key, values_.at(key)) : fallback;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    return has(key) ? parse_integer(key, values_.at(key)) : fallback;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("key '" + key + "': not an unsigned integer");
    return out;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': not a boolean");
  }

  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    std::string item;
    std::istringstream in(values_.at(key));
    while (std::getline(in, item, ',')) {
      const auto t = trim(item);
      if (!t.empty()) out.push_back(parse_real(key, t));
    }
    return out;
  }

  /// "k=v\n" lines in key order; the hash covers exactly this text.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }

 private:
  static double parse_real(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw ConfigError("key '" + key + "': trailing characters in '" + v + "'");
      return d;
    } catch (const std::logic_error&) {
      throw ConfigError("key '" + key + "': not a number: '" + v + "'");
    }
  }

  static std::int64_t parse_integer(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("key '" + key + "': not an integer");
    return out;
  }

  std::map<std::string, std::string> values_;
};

// --- JSON writer ------------------------------------------------------------

/// Minimal streaming JSON writer. Doubles use 17 significant digits;
/// non-finite values become strings.
class JsonWriter {
 public:
  JsonWriter& begin_object() {
    comma();
    out_ += '{';
    first_.push_back(true);
    return *this;
  }
  JsonWriter& end_object() {
    out_ += '}';
    first_.pop_back();
    return *this;
  }
  JsonWriter& begin_array() {
    comma();
    out_ += '[';
    first_.push_back(true);
    return *this;
  }
  JsonWriter& end_array() {
    out_ += ']';
    first_.pop_back();
    return *this;
  }
  JsonWriter& key(std::string_view k) {
    comma();
    string_literal(k);
    out_ += ':';
    after_key_ = true;
    return *this;
  }
  JsonWriter& value(double v) {
    comma();
    if (std::isfinite(v)) {
      out_ += fmt17(v);
    } else {
      string_literal(fmt17(v));
    }
    return *this;
  }
  JsonWriter& value(std::int64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
  }
  JsonWriter& value(std::uint64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
  }
  JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
  JsonWriter& value(unsigned v) { return value(static_cast<std::uint64_t>(v)); }
  JsonWriter& value(bool v) {
    comma();
    out_ += v ? "true" : "false";
    return *this;
  }
  JsonWriter& value(std::string_view v) {
    comma();
    string_literal(v);
    return *this;
  }
  JsonWriter& value(const char* v) { return value(std::string_view(v)); }
  JsonWriter& null() {
    comma();
    out_ += "null";
    return *this;
  }
  template <typename T>
  JsonWriter& field(std::string_view k, const T& v) {
    key(k);
    return value(v);
  }
  template <typename T>
  JsonWriter& array(std::string_view k, const std::vector<T>& xs) {
    key(k);
    begin_array();
    for (const auto& x : xs) value(x);
    return end_array();
  }

  const std::string& str() const noexcept { return out_; }

 private:
  void comma() {
    if (after_key_) {
      after_key_ = false;
      return;
    }
    if (!first_.empty()) {
      if (!first_.back()) out_ += ',';
      first_.back() = false;
    }
  }
  void string_literal(std::string_view s) {
    out_ += '"';
    for (char c : s) {
      switch (c) {
        case '"':
          out_ += "\\\"";
          break;
        case '\\':
          out_ += "\\\\";
          break;
        case '\n':
          out_ += "\\n";
          break;
        case '\t':
          out_ += "\\t";
          break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", c);
            out_ += buf;
          } else {
            out_ += c;
          }
      }
    }
    out_ += '"';
  }

  std::string out_;
  std::vector<bool> first_;
  bool after_key_ = false;
};

/// Reads a double written by JsonWriter (number or "inf"/"-inf"/"nan").
inline double json_real(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw IoError("expected a number in JSON input");
}

// --- files ------------------------------------------------------------------

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return in;
}

inline void write_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// --- trees ------------------------------------------------------------------

inline void write_tree(std::ostream& out, const BranchingTree& tree, std::uint64_t config_hash) {
  JsonWriter h;
  h.begin_object().field("type", "header").field("horizon", tree.horizon()).field("seed", tree.seed());
  h.key("offspring").begin_array();
  for (double p : tree.offspring().probabilities()) h.value(p);
  h.end_array();
  h.key("barrier_offset");
  if (tree.barrier_offset()) {
    h.value(*tree.barrier_offset());
  } else {
    h.null();
  }
  h.field("pruned_count", static_cast<std::uint64_t>(tree.pruned_count()))
      .field("node_count", static_cast<std::uint64_t>(tree.nodes().size()))
      .field("config_hash", hex64(config_hash))
      .end_object();
  out << h.str() << '\n';
  std::string line;
  for (NodeId i = 0; i < tree.nodes().size(); ++i) {
    const auto& n = tree.node(i);
    line = "{\"id\":" + std::to_string(i) + ",\"parent\":" +
           (n.parent == kNoNode ? std::string("-1") : std::to_string(n.parent)) + ",\"birth_time\":" +
           fmt17(n.birth_time) + ",\"end_time\":" + fmt17(n.end_time) + ",\"birth_position\":" + fmt17(n.birth_position) +
           ",\"end_position\":" + fmt17(n.end_position) + ",\"pruned\":" + (n.pruned ? "true" : "false") + "}\n";
    out << line;
  }
}

inline BranchingTree read_tree(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("tree file: missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tree file: bad header: ") + e.what());
  }
  if (h.value("type", "") != "header") throw IoError("tree file: first line is not a header");
  std::vector<double> probs;
  for (const auto& p : h.at("offspring")) probs.push_back(json_real(p));
  std::optional<double> barrier;
  if (!h.at("barrier_offset").is_null()) barrier = json_real(h.at("barrier_offset"));
  const auto count = h.at("node_count").get<std::size_t>();
  std::vector<TreeNode> nodes;
  nodes.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("tree file: bad node line: ") + e.what());
    }
    const auto id = j.at("id").get<std::int64_t>();
    if (id != static_cast<std::int64_t>(nodes.size())) throw IoError("tree file: node ids must be consecutive");
    const auto parent = j.at("parent").get<std::int64_t>();
    TreeNode n{json_real(j.at("birth_time")),
               json_real(j.at("end_time")),
               json_real(j.at("birth_position")),
               json_real(j.at("end_position")),
               parent < 0 ? kNoNode : static_cast<NodeId>(parent),
               kNoNode,
               0,
               j.at("pruned").get<bool>()};
    nodes.push_back(n);
  }
  if (nodes.size() != count) throw IoError("tree file: node count does not match header");
  for (NodeId i = 1; i < nodes.size(); ++i) {
    const NodeId p = nodes[i].parent;
    if (p >= i) throw IoError("tree file: parent must precede child");
    auto& pn = nodes[p];
    if (pn.child_count == 0) {
      pn.first_child = i;
    } else if (pn.first_child + pn.child_count != i) {
      throw IoError("tree file: children are not contiguous");
    }
    ++pn.child_count;
  }
  try {
    return tree_from_nodes(std::move(nodes), json_real(h.at("horizon")), h.at("seed").get<std::uint64_t>(),
                           OffspringLaw::with_any_mean(probs), barrier, h.at("pruned_count").get<std::size_t>());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("tree file: ") + e.what());
  }
}

// --- run records ------------------------------------------------------------

inline std::string record_header_line(const Config& cfg) {
  JsonWriter w;
  w.begin_object().field("type", "header").field("config_hash", hex64(cfg.hash())).key("config").begin_object();
  for (const auto& [k, v] : cfg.values()) w.field(k, v);
  w.end_object().end_object();
  return w.str();
}

inline std::string record_line(const RunRecord& r) {
  JsonWriter w;
  w.begin_object()
      .field("seed", r.seed)
      .field("horizon", r.horizon)
      .field("z", r.z)
      .field("z2", r.z2)
      .field("max_centered", r.max_centered)
      .field("leaf_count", static_cast<std::uint64_t>(r.leaf_count))
      .field("pruned_count", static_cast<std::uint64_t>(r.pruned_count))
      .field("config_hash", hex64(r.config_hash))
      .end_object();
  return w.str();
}

inline std::vector<RunRecord> read_records(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("records: ") + e.what());
    }
    if (j.value("type", "") == "header") {
      header = true;
      continue;
    }
    RunRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.horizon = json_real(j.at("horizon"));
    r.z = json_real(j.at("z"));
    r.z2 = json_real(j.at("z2"));
    r.max_centered = json_real(j.at("max_centered"));
    r.leaf_count = j.at("leaf_count").get<std::size_t>();
    r.pruned_count = j.at("pruned_count").get<std::size_t>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    out.push_back(r);
  }
  if (!header) throw IoError("records: missing header line");
  return out;
}

// --- thinned processes ------------------------------------------------------

/// One run's thinned points: JSON with positions, indices, q, horizon.
inline std::string thinned_json(const ThinnedProcess& t, std::uint64_t seed, double z, double floor,
                                std::uint64_t config_hash) {
  JsonWriter w;
  w.begin_object()
      .field("seed", seed)
      .field("q", t.q)
      .field("horizon", t.horizon)
      .field("z", z)
      .field("floor", floor)
      .field("config_hash", hex64(config_hash))
      .array("positions", t.positions);
  w.key("indices").begin_array();
  for (auto i : t.selected_indices) w.value(static_cast<std::uint64_t>(i));
  w.end_array().end_object();
  return w.str();
}

struct ThinnedLine {
  std::uint64_t seed = 0;
  double q = 0.0;
  ThinnedRun run;
};

inline std::vector<ThinnedLine> read_thinned(std::istream& in) {
  std::vector<ThinnedLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("thinned: ") + e.what());
    }
    if (j.value("type", "") == "header") continue;
    ThinnedLine t;
    t.seed = j.at("seed").get<std::uint64_t>();
    t.q = json_real(j.at("q"));
    t.run.z = json_real(j.at("z"));
    t.run.floor = json_real(j.at("floor"));
    for (const auto& p : j.at("positions")) t.run.points.push_back(json_real(p));
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string cluster_decomposition_json(const ClusterDecomposition& d) {
  JsonWriter w;
  w.begin_object().field("q", d.q).field("horizon", d.horizon);
  w.key("representatives").begin_array();
  for (auto r : d.representatives) w.value(static_cast<std::uint64_t>(r));
  w.end_array().key("blocks").begin_array();
  for (const auto& b : d.blocks) {
    w.begin_array();
    for (auto i : b) w.value(static_cast<std::uint64_t>(i));
    w.end_array();
  }
  w.end_array().end_object();
  return w.str();
}

// --- point samples ----------------------------------------------------------

inline std::string point_sample_csv(const PointSample& s, std::uint64_t config_hash) {
  std::string out = "index,point,seed,config_hash\n";
  const std::string tail = "," + std::to_string(s.seed) + "," + hex64(config_hash) + "\n";
  for (std::size_t i = 0; i < s.points.size(); ++i) out += std::to_string(i) + "," + fmt17(s.points[i]) + tail;
  return out;
}

inline std::string point_sample_sidecar(const PointSample& s, std::uint64_t config_hash) {
  JsonWriter w;
  w.begin_object()
      .field("kind", to_string(s.kind))
      .field("seed", s.seed)
      .field("config_hash", hex64(config_hash))
      .field("intensity_scale", s.intensity_scale)
      .field("window_low", s.low)
      .field("window_high", s.high)
      .field("r", s.r)
      .field("point_count", static_cast<std::uint64_t>(s.points.size()));
  if (s.kind != ProcessKind::kPpp) {
    w.field("truncation_depth", s.truncation_depth)
        .field("epsilon", s.epsilon)
        .field("atom_floor", s.atom_floor)
        .field("atom_count", static_cast<std::uint64_t>(s.atoms.size()))
        .field("atoms_reaching_window", static_cast<std::uint64_t>(s.atoms_reaching_window()))
        .field("neglected_mass", s.neglected_mass)
        .field("pruned_particles", static_cast<std::uint64_t>(s.pruned_particles));
  }
  w.end_object();
  return w.str();
}

// --- reports ----------------------------------------------------------------

inline void write_report_json(JsonWriter& w, const TestReport& t) {
  w.begin_object()
      .field("name", t.name)
      .field("statistic", t.statistic)
      .field("p_value", t.p_value)
      .field("criterion", t.criterion)
      .field("passed", t.passed)
      .field("sample_size", static_cast<std::uint64_t>(t.sample_size))
      .field("excluded", static_cast<std::uint64_t>(t.excluded))
      .field("config_hash", hex64(t.config_hash));
  w.key("extra").begin_object();
  for (const auto& [k, v] : t.extra) w.field(k, v);
  w.end_object();
  if (!t.note.empty()) w.field("note", t.note);
  w.end_object();
}

inline std::string reports_json(const std::vector<TestReport>& reports, std::uint64_t config_hash, std::uint64_t seed) {
  JsonWriter w;
  w.begin_object().field("config_hash", hex64(config_hash)).field("seed", seed).key("tests").begin_array();
  for (const auto& t : reports) write_report_json(w, t);
  w.end_array().end_object();
  return w.str() + "\n";
}

inline std::string reports_text(const std::vector<TestReport>& reports, std::uint64_t config_hash, std::uint64_t seed) {
  std::ostringstream o;
  o << "config_hash " << hex64(config_hash) << "  seed " << seed << "\n";
  for (const auto& t : reports) {
    o << (t.passed ? "PASS " : "FAIL ") << t.name << "  statistic=" << fmt17(t.statistic)
      << "  p=" << fmt17(t.p_value) << "  n=" << t.sample_size << "  excluded=" << t.excluded << "  [" << t.criterion
      << "]\n";
    for (const auto& [k, v] : t.extra) o << "    " << k << " = " << fmt17(v) << "\n";
    if (!t.note.empty()) o << "    note: " << t.note << "\n";
  }
  return o.str();
}

}  // namespace bbmlab

#endif  // BBMLAB_IO_HPP_
