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


// bbmlab command-line driver.
//
//   bbmlab <simulate|thin|stats|cluster|tidal|fkpp|report> [options]
//
// Parameters come from an optional key=value file (--config), then --set
// overrides, then the named per-key flags. Every parameter a command reads is
// resolved (defaults filled in) before the config hash is taken, so the hash
// identifies the data. Runtime knobs (--out, --workers) are not part of it.
//
// Exit codes: 0 success, 1 an acceptance test failed, 2 usage or config
// error, 3 file error.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "bbmlab.hpp"

namespace fs = std::filesystem;
using namespace bbmlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- ordered worker pool ----------------------------------------------------

// Runs compute(i) for i in [0, n) on `workers` threads and hands results to
// emit(i, result) on the calling thread in index order. At most a bounded
// window of finished results waits for the writer.
template <typename Result, typename Compute, typename Emit>
void ordered_map(std::size_t n, unsigned workers, Compute&& compute, Emit&& emit) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) emit(i, compute(i));
    return;
  }
  std::mutex mu;
  std::condition_variable ready, room;
  std::map<std::size_t, Result> done;
  std::size_t next_task = 0, next_write = 0;
  const std::size_t window = 4 * static_cast<std::size_t>(workers);
  std::exception_ptr failure;
  bool stop = false;

  auto work = [&] {
    for (;;) {
      std::size_t i = 0;
      {
        std::unique_lock lk(mu);
        room.wait(lk, [&] { return stop || next_task >= n || next_task < next_write + window; });
        if (stop || next_task >= n) return;
        i = next_task++;
      }
      try {
        Result r = compute(i);
        std::lock_guard lk(mu);
        done.emplace(i, std::move(r));
        ready.notify_all();
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        ready.notify_all();
        room.notify_all();
        return;
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    while (next_write < n) {
      Result r;
      {
        std::unique_lock lk(mu);
        ready.wait(lk, [&] { return stop || done.count(next_write) != 0; });
        if (stop) break;
        auto it = done.find(next_write);
        r = std::move(it->second);
        done.erase(it);
      }
      try {
        emit(next_write, r);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        room.notify_all();
        break;
      }
      std::lock_guard lk(mu);
      ++next_write;
      room.notify_all();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// --- parameters -------------------------------------------------------------

std::string shortest(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// Reads parameters and records the value actually used back into the config,
// so defaults take part in the hash.
class Params {
 public:
  explicit Params(Config& c) : cfg_(c) {}

  double real(const std::string& k, double fallback) {
    const double v = cfg_.real(k, fallback);
    cfg_.set(k, shortest(v));
    return v;
  }
  std::uint64_t count(const std::string& k, std::uint64_t fallback) {
    const auto v = cfg_.unsigned_integer(k, fallback);
    cfg_.set(k, std::to_string(v));
    return v;
  }
  bool flag(const std::string& k, bool fallback) {
    const bool v = cfg_.boolean(k, fallback);
    cfg_.set(k, v ? "true" : "false");
    return v;
  }
  std::vector<double> reals(const std::string& k, std::vector<double> fallback) {
    const auto v = cfg_.reals(k, std::move(fallback));
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + shortest(v[i]);
    cfg_.set(k, s);
    return v;
  }
  std::string text(const std::string& k, const std::string& fallback) {
    const auto v = cfg_.str(k, fallback);
    cfg_.set(k, v);
    return v;
  }
  std::optional<double> optional_real(const std::string& k) {
    if (!cfg_.has(k) || cfg_.str(k, "") == "none") {
      cfg_.set(k, "none");
      return std::nullopt;
    }
    return real(k, 0.0);
  }
  OffspringLaw offspring() {
    const auto probs = reals("offspring", {0.0, 1.0});
    try {
      return OffspringLaw(probs);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key 'offspring': ") + e.what());
    }
  }

 private:
  Config& cfg_;
};

void check_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::vector<Step> parse_steps(const std::string& text) {
  // "low:high:weight;low:high:weight"
  std::vector<Step> steps;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (trim(item).empty()) continue;
    Step s{};
    char c1 = 0, c2 = 0;
    std::istringstream one(item);
    if (!(one >> s.low >> c1 >> s.high >> c2 >> s.weight) || c1 != ':' || c2 != ':') {
      throw ConfigError("key 'phi': expected low:high:weight, got '" + item + "'");
    }
    steps.push_back(s);
  }
  check_config(!steps.empty(), "key 'phi': no steps");
  return steps;
}

// --- command context --------------------------------------------------------

struct Context {
  Config cfg;
  std::string out_dir;
  unsigned workers = 1;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;

  std::string path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }
  // Relative input paths are read from the output directory.
  std::string input(const std::string& value) const {
    if (value == "none" || fs::path(value).is_absolute()) return value;
    return path(value);
  }

  // Hash is frozen once all parameters are resolved.
  void freeze() {
    hash = cfg.hash();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
  }

  std::string csv_tail() const { return "," + std::to_string(seed) + "," + hex64(hash) + "\n"; }
};

std::ofstream create(const std::string& path) { return open_out(path); }

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("write failed: " + path);
}

int exit_for(const std::vector<TestReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const TestReport& t) { return t.passed; }) ? kExitOk
                                                                                                   : kExitFailed;
}

void write_reports(const Context& ctx, const std::string& stem, std::vector<TestReport>& reports) {
  for (auto& t : reports) t.config_hash = ctx.hash;
  write_file(ctx.path(stem + ".json"), reports_json(reports, ctx.hash, ctx.seed));
  write_file(ctx.path(stem + ".txt"), reports_text(reports, ctx.hash, ctx.seed));
  std::cout << reports_text(reports, ctx.hash, ctx.seed);
}

TestReport make_report(const std::string& name, bool passed, double statistic, const std::string& rule,
                       std::size_t n = 0) {
  TestReport t;
  t.name = name;
  t.passed = passed;
  t.statistic = statistic;
  t.criterion = rule;
  t.sample_size = n;
  return t;
}

// --- simulate ---------------------------------------------------------------

struct SimulateResult {
  std::string record;
  std::vector<std::string> checkpoint_records;
  std::vector<std::string> thinned;  // one line per q
  std::string top;
};

int cmd_simulate(Context& ctx) {
  Params p(ctx.cfg);
  SimConfig base;
  base.horizon = p.real("horizon", 10.0);
  base.offspring = p.offspring();
  base.barrier_offset = p.optional_real("barrier_offset");
  base.checkpoint_times = p.reals("checkpoints", {});
  base.max_nodes = p.count("max_nodes", 50'000'000);
  const auto replicas = p.count("replicas", 100);
  ctx.seed = p.count("seed", 0);
  const bool save_trees = p.flag("save_trees", false);
  const auto thin_q = p.reals("thin_q", {});
  const double thin_floor = p.real("thin_floor", -4.0);
  const auto thin_top = p.count("thin_top", 10);
  const auto record_top = p.count("record_top", 0);
  check_config(base.horizon > 1.0, "key 'horizon': must exceed 1");
  for (double c : base.checkpoint_times) check_config(c > 1.0, "key 'checkpoints': times must exceed 1");
  for (double q : thin_q) check_config(q >= 0.0 && q <= 1.0, "key 'thin_q': values must lie in [0, 1]");
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  ctx.freeze();

  if (save_trees) {
    std::error_code ec;
    fs::create_directories(ctx.path("trees"), ec);
    if (ec) throw IoError("cannot create tree directory: " + ec.message());
  }
  const std::string header = record_header_line(ctx.cfg) + "\n";
  auto records = create(ctx.path("records.ndjson"));
  records << header;
  std::ofstream checkpoints;
  if (!base.checkpoint_times.empty()) {
    checkpoints = create(ctx.path("checkpoints.ndjson"));
    checkpoints << header;
  }
  std::vector<std::ofstream> thinned;
  std::vector<std::string> thinned_paths;
  for (double q : thin_q) {
    thinned_paths.push_back(ctx.path("thinned_q" + shortest(q) + ".ndjson"));
    thinned.push_back(create(thinned_paths.back()));
    thinned.back() << header;
  }
  std::ofstream top;
  if (record_top > 0) {
    top = create(ctx.path("top.ndjson"));
    top << header;
  }

  const std::size_t digits = std::to_string(replicas).size();
  auto compute = [&](std::size_t i) {
    SimConfig c = base;
    c.seed = derive_key(ctx.seed, i);
    const BranchingTree tree = simulate_tree(c);
    SimulateResult out;
    out.record = record_line(make_run_record(tree, c.horizon, ctx.hash));
    for (double s : c.checkpoint_times) {
      if (s == c.horizon) continue;
      out.checkpoint_records.push_back(record_line(make_run_record(tree, s, ctx.hash)));
    }
    const double z = derivative_martingale(tree, c.horizon);
    std::optional<ExtremalConfiguration> config;
    if (!tree.leaves().empty()) config = leaf_configuration(tree);
    for (double q : thin_q) {
      ThinnedProcess tp;
      tp.q = q;
      tp.horizon = c.horizon;
      double floor = -kInf;
      if (config) {
        tp = q_thinning_above(tree, *config, q, thin_floor);
        floor = thin_floor;
        if (tp.size() < thin_top) {
          tp = q_thinning_top(tree, *config, q, thin_top);
          // Fewer than thin_top clusters in total: the list is complete.
          floor = tp.size() < thin_top ? -kInf : std::min(thin_floor, tp.positions.back());
        }
      }
      out.thinned.push_back(thinned_json(tp, c.seed, z, floor, ctx.hash));
    }
    if (record_top > 0) {
      JsonWriter w;
      w.begin_object().field("seed", c.seed).field("horizon", c.horizon).field("config_hash", hex64(ctx.hash));
      std::vector<double> pts;
      if (config) pts.assign(config->positions.begin(), config->positions.begin() + std::min<std::size_t>(record_top, config->size()));
      w.array("positions", pts).end_object();
      out.top = w.str();
    }
    if (save_trees) {
      std::string idx = std::to_string(i);
      idx.insert(0, digits - idx.size(), '0');
      const auto path = ctx.path("trees/tree_" + idx + ".ndjson");
      auto f = create(path);
      write_tree(f, tree, ctx.hash);
      finish(f, path);
    }
    return out;
  };
  auto emit = [&](std::size_t, const SimulateResult& r) {
    records << r.record << "\n";
    for (const auto& line : r.checkpoint_records) checkpoints << line << "\n";
    for (std::size_t j = 0; j < thinned.size(); ++j) thinned[j] << r.thinned[j] << "\n";
    if (record_top > 0) top << r.top << "\n";
  };
  ordered_map<SimulateResult>(replicas, ctx.workers, compute, emit);

  finish(records, ctx.path("records.ndjson"));
  if (checkpoints.is_open()) finish(checkpoints, ctx.path("checkpoints.ndjson"));
  for (std::size_t j = 0; j < thinned.size(); ++j) finish(thinned[j], thinned_paths[j]);
  if (top.is_open()) finish(top, ctx.path("top.ndjson"));
  std::cout << "simulate: " << replicas << " replicas, config_hash " << hex64(ctx.hash) << ", seed " << ctx.seed
            << "\n";
  return kExitOk;
}

// --- thin -------------------------------------------------------------------

struct ThinResult {
  std::vector<std::string> thinned;
  std::vector<std::string> clusters;
  std::size_t oracle_checked = 0;
  std::size_t oracle_mismatches = 0;
  std::size_t ultrametric_checked = 0;
  std::size_t ultrametric_violations = 0;
  int stable = -1;  // -1 not evaluated
};

std::vector<std::string> list_trees(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("tree directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".ndjson") files.push_back(e.path().string());
  }
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no tree files in " + dir);
  return files;
}

int cmd_thin(Context& ctx) {
  Params p(ctx.cfg);
  const auto trees_dir = ctx.input(p.text("trees", "trees"));
  const auto qs = p.reals("q", {0.5});
  const bool oracle = p.flag("oracle", true);
  const bool ultrametric = p.flag("ultrametric", true);
  const bool decomposition = p.flag("decomposition", false);
  const auto cap = p.count("matrix_cap", kDefaultMatrixCap);
  const double window = p.real("window", -kInf);
  const auto r_d = p.optional_real("r_d");
  const auto r_g = p.optional_real("r_g");
  const double stable_y = p.real("stability_y", -1.0);
  const auto stable_points = p.count("stability_points", 9);
  const double stable_min = p.real("stability_min_fraction", 0.9);
  ctx.seed = p.count("seed", 0);
  for (double q : qs) check_config(q >= 0.0 && q <= 1.0, "key 'q': values must lie in [0, 1]");
  check_config(r_d.has_value() == r_g.has_value(), "keys 'r_d' and 'r_g' go together");
  ctx.freeze();
  const auto files = list_trees(trees_dir);

  auto compute = [&](std::size_t i) {
    auto in = open_in(files[i]);
    const BranchingTree tree = read_tree(in);
    ThinResult out;
    if (tree.leaves().empty()) return out;
    const auto full = leaf_configuration(tree);
    const auto config = std::isfinite(window) ? leaves_in_window(full, window) : full;
    const double z = derivative_martingale(tree, tree.horizon());
    std::optional<OverlapMatrix> matrix;
    if ((oracle || ultrametric) && config.size() <= cap && !config.empty()) {
      matrix = normalized_overlap_matrix(tree, config.leaf_ids, cap);
    }
    if (ultrametric && matrix) {
      ++out.ultrametric_checked;
      out.ultrametric_violations += ultrametric_violations(*matrix);
    }
    for (double q : qs) {
      const auto by_tree = q_thinning_tree(tree, config, q);
      out.thinned.push_back(thinned_json(by_tree, tree.seed(), z, std::isfinite(window) ? window : -kInf, ctx.hash));
      if (oracle && matrix) {
        ++out.oracle_checked;
        const auto by_matrix = q_thinning_matrix(config, *matrix, q);
        if (by_matrix.selected_indices != by_tree.selected_indices || by_matrix.positions != by_tree.positions) {
          ++out.oracle_mismatches;
        }
      }
      if (decomposition) out.clusters.push_back(cluster_decomposition_json(cluster_decomposition(tree, config, q)));
    }
    if (r_d) {
      const auto grid = stability_grid(tree.horizon(), *r_d, *r_g, static_cast<int>(stable_points));
      out.stable = thinning_stable_above(tree, full, stable_y, grid) ? 1 : 0;
    }
    return out;
  };

  const std::string header = record_header_line(ctx.cfg) + "\n";
  auto thinned = create(ctx.path("thinned.ndjson"));
  thinned << header;
  std::ofstream clusters;
  if (decomposition) {
    clusters = create(ctx.path("clusters.ndjson"));
    clusters << header;
  }
  std::size_t checked = 0, mismatches = 0, u_checked = 0, violations = 0, stable = 0, stable_n = 0;
  auto emit = [&](std::size_t, const ThinResult& r) {
    for (const auto& line : r.thinned) thinned << line << "\n";
    for (const auto& line : r.clusters) clusters << line << "\n";
    checked += r.oracle_checked;
    mismatches += r.oracle_mismatches;
    u_checked += r.ultrametric_checked;
    violations += r.ultrametric_violations;
    if (r.stable >= 0) {
      ++stable_n;
      stable += static_cast<std::size_t>(r.stable);
    }
  };
  ordered_map<ThinResult>(files.size(), ctx.workers, compute, emit);
  finish(thinned, ctx.path("thinned.ndjson"));
  if (clusters.is_open()) finish(clusters, ctx.path("clusters.ndjson"));

  std::vector<TestReport> reports;
  if (oracle) {
    reports.push_back(make_report("thinning_oracle_agreement", mismatches == 0, static_cast<double>(mismatches),
                                  "tree and matrix thinning agree on every run and q", checked));
  }
  if (ultrametric) {
    reports.push_back(make_report("ultrametric_violations", violations == 0, static_cast<double>(violations),
                                  "no ultrametric violations", u_checked));
  }
  if (stable_n > 0) {
    const double frac = static_cast<double>(stable) / static_cast<double>(stable_n);
    reports.push_back(make_report("thinning_stability", frac >= stable_min, frac,
                                  "stable fraction >= " + shortest(stable_min), stable_n));
  }
  write_reports(ctx, "thin_report", reports);
  return exit_for(reports);
}

// --- stats ------------------------------------------------------------------

std::vector<ThinnedRun> load_thinned(const std::string& path) {
  auto in = open_in(path);
  std::vector<ThinnedRun> runs;
  for (auto& line : read_thinned(in)) runs.push_back(std::move(line.run));
  return runs;
}

std::vector<std::vector<double>> load_top(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("top configurations: " + std::string(e.what()));
    }
    if (j.value("type", "") == "header") continue;
    std::vector<double> pts;
    for (const auto& x : j.at("positions")) pts.push_back(json_real(x));
    out.push_back(std::move(pts));
  }
  return out;
}

int cmd_stats(Context& ctx) {
  Params p(ctx.cfg);
  ctx.seed = p.count("seed", 0);
  const bool synthetic = p.text("input", "file") == "synthetic";
  const auto records_path = ctx.input(p.text("records", synthetic ? "none" : "records.ndjson"));
  const auto thinned_path = ctx.input(p.text("thinned", synthetic ? "none" : "thinned_q0.5.ndjson"));
  const auto c_fixed = p.optional_real("c_hat");
  SuiteOptions so;
  so.k = p.count("k", 5);
  so.count_level = p.real("count_level", -1.0);
  so.ks_alpha = p.real("ks_alpha", 0.01);
  so.dispersion_low = p.real("dispersion_low", 0.85);
  so.dispersion_high = p.real("dispersion_high", 1.15);
  so.z_floor = p.real("z_floor", 1e-300);
  const bool controls = p.flag("controls", true);
  const double control_floor = p.real("control_floor", -4.0);
  const auto synthetic_runs = p.count("synthetic_runs", 2000);
  const auto phi_text = p.text("phi", "none");
  const auto laplace_path = ctx.input(p.text("laplace_thinned", "none"));
  const auto pairs_a = ctx.input(p.text("superposition_a", "none"));
  const auto pairs_b = ctx.input(p.text("superposition_b", "none"));
  const auto singles = ctx.input(p.text("superposition_singles", "none"));
  const auto permutations = p.count("permutations", 199);
  const auto top_path = ctx.input(p.text("top", "none"));
  const auto rank_n = p.count("rank_n", 10);
  check_config(so.k >= 1 && so.k <= 10, "key 'k': must lie in 1..10");
  check_config(!synthetic || c_fixed.has_value(), "synthetic input needs key 'c_hat'");
  const std::vector<Step> phi = phi_text == "none" ? std::vector<Step>{} : parse_steps(phi_text);
  ctx.freeze();

  std::vector<TestReport> reports;
  double c_hat = 0.0;
  if (c_fixed) {
    c_hat = *c_fixed;
  } else {
    check_config(records_path != "none", "key 'c_hat' or 'records' is required");
    auto in = open_in(records_path);
    const auto records = read_records(in);
    const auto est = estimate_C(std::span<const RunRecord>(records));
    c_hat = est.value;
    auto t = make_report("estimate_C", est.value > 0.0, est.value, "tail fit of the centered maximum", records.size());
    t.extra = {{"stderr", est.stderr_}, {"window_low", est.window_low}, {"window_high", est.window_high}};
    reports.push_back(std::move(t));
  }
  check_config(c_hat > 0.0, "c_hat must be > 0");

  std::vector<ThinnedRun> runs;
  if (synthetic) {
    std::vector<ThinnedRun> base(synthetic_runs);
    for (auto& r : base) r.z = 1.0;
    runs = ppp_control_runs(base, c_hat, control_floor, derive_key(ctx.seed, 0x5157));
  } else if (thinned_path != "none") {
    runs = load_thinned(thinned_path);
  }
  if (!runs.empty()) {
    for (auto& t : poissonianity_suite(runs, c_hat, so, synthetic ? "synthetic_" : "")) reports.push_back(std::move(t));
    if (controls) {
      const auto positive = ppp_control_runs(runs, c_hat, control_floor, derive_key(ctx.seed, 0xC0));
      for (auto& t : poissonianity_suite(positive, c_hat, so, "control_ppp_")) reports.push_back(std::move(t));
      const auto lattice = lattice_control_runs(runs, c_hat, control_floor);
      const auto neg = poissonianity_suite(lattice, c_hat, so, "lattice_");
      auto t = make_report("control_lattice_rejected", neg.front().p_value < 1e-6, neg.front().statistic,
                           "lattice spacings rejected with p < 1e-6", neg.front().sample_size);
      t.p_value = neg.front().p_value;
      reports.push_back(std::move(t));
    }
  }
  if (!phi.empty()) {
    const auto lruns = laplace_path == "none" ? runs : load_thinned(laplace_path);
    LaplaceOptions lo;
    lo.seed = derive_key(ctx.seed, 0x1A);
    lo.z_floor = so.z_floor;
    reports.push_back(laplace_functional_compare(lruns, phi, c_hat, lo));
  }
  if (pairs_a != "none" || pairs_b != "none" || singles != "none") {
    check_config(pairs_a != "none" && pairs_b != "none" && singles != "none",
                 "superposition needs superposition_a, superposition_b and superposition_singles");
    const auto a = load_thinned(pairs_a);
    const auto b = load_thinned(pairs_b);
    const auto s = load_thinned(singles);
    if (a.size() != b.size()) throw IoError("superposition inputs have different run counts");
    EnergyOptions eo;
    eo.k = so.k;
    eo.permutations = permutations;
    eo.seed = derive_key(ctx.seed, 0xE);
    reports.push_back(superposition_test(a, b, s, c_hat, eo));
  }
  if (top_path != "none") {
    const auto configs = load_top(top_path);
    std::vector<std::vector<double>> usable;
    for (const auto& c : configs) {
      if (c.size() >= rank_n + 1) usable.push_back(c);
    }
    const auto gaps = rank_gap_profile(usable, rank_n);
    bool ok = !usable.empty();
    double worst = 0.0;
    TestReport t;
    for (std::size_t n = 2; n <= rank_n; ++n) {
      const double scaled = static_cast<double>(n) * gaps[n - 1];
      ok = ok && scaled >= 0.5 && scaled <= 2.0;
      worst = std::max(worst, std::abs(std::log(scaled)));
      t.extra.push_back({"n_gap_" + std::to_string(n), scaled});
    }
    t.name = "rank_gaps";
    t.passed = ok;
    t.statistic = worst;
    t.criterion = "n * mean gap in [0.5, 2] for n = 2.." + std::to_string(rank_n);
    t.sample_size = usable.size();
    t.excluded = configs.size() - usable.size();
    reports.push_back(std::move(t));
  }
  check_config(!reports.empty(), "stats: nothing to test; give thinned, phi, superposition or top inputs");
  write_reports(ctx, "stats_report", reports);
  return exit_for(reports);
}

// --- cluster / tidal --------------------------------------------------------

std::string point_rows(double r, std::size_t replica, const PointSample& s, const Context& ctx) {
  std::string out;
  const auto tail = "," + std::to_string(s.seed) + "," + hex64(ctx.hash) + "\n";
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    out += shortest(r) + "," + std::to_string(replica) + "," + std::to_string(i) + "," + fmt17(s.points[i]) + tail;
  }
  return out;
}

struct DecoratedResult {
  std::string rows;
  std::string sidecar;
  double count = 0.0;
  double neglected = 0.0;
  double depth = 0.0;
  double doubling_change = -1.0;  // -1 when not checked
};

int cmd_cluster(Context& ctx) {
  Params p(ctx.cfg);
  const auto rs = p.reals("r", {4.0, 8.0, 12.0});
  const double lambda = p.real("lambda", 1.0);
  const double y = p.real("y", 0.0);
  const auto replicas = p.count("replicas", 200);
  const double epsilon = p.real("epsilon", 1e-6);
  const double depth = p.real("depth", 0.0);
  const auto check_n = p.count("depth_check_replicas", 10);
  const auto law = p.offspring();
  ctx.seed = p.count("seed", 0);
  check_config(replicas >= 1, "key 'replicas': must be >= 1");
  check_config(lambda > 0.0, "key 'lambda': must be > 0");
  for (double r : rs) check_config(r >= 0.0, "key 'r': values must be >= 0");
  ctx.freeze();

  auto points = create(ctx.path("cluster_points.csv"));
  points << "r,replica,index,point,seed,config_hash\n";
  auto samples = create(ctx.path("cluster_samples.ndjson"));
  samples << record_header_line(ctx.cfg) << "\n";
  auto table = create(ctx.path("cluster_table.csv"));
  table << "r,replicas,mean_count,stderr,mean_neglected_mass,analytic_mean,truncation_depth,epsilon,seed,config_hash\n";
  std::vector<TestReport> reports;
  std::vector<double> means;

  for (std::size_t ri = 0; ri < rs.size(); ++ri) {
    DecoratedConfig base;
    base.r = rs[ri];
    base.lambda = lambda;
    base.view_low = y;
    base.epsilon = epsilon;
    base.truncation_depth = depth;
    base.offspring = law;
    auto compute = [&](std::size_t i) {
      DecoratedConfig c = base;
      c.seed = derive_key(derive_key(ctx.seed, ri), i);
      const auto s = sample_cluster_process(c);
      DecoratedResult out;
      out.rows = point_rows(c.r, i, s, ctx);
      out.sidecar = point_sample_sidecar(s, ctx.hash);
      out.count = static_cast<double>(s.points.size());
      out.neglected = s.neglected_mass;
      out.depth = s.truncation_depth;
      if (i < check_n) {
        c.truncation_depth = 2.0 * s.truncation_depth;
        const auto d = sample_cluster_process(c);
        double change = d.points.size() == s.points.size() ? 0.0 : 1.0;
        for (std::size_t j = 0; change == 0.0 && j < s.points.size(); ++j) {
          change = std::max(change, std::abs(d.points[j] - s.points[j]) / std::max(1.0, std::abs(s.points[j])));
        }
        out.doubling_change = change;
      }
      return out;
    };
    CompensatedSum sum, sum2, neglected;
    double used_depth = 0.0, worst_change = 0.0;
    std::size_t checked = 0;
    auto emit = [&](std::size_t, const DecoratedResult& r) {
      points << r.rows;
      samples << r.sidecar << "\n";
      sum.add(r.count);
      sum2.add(r.count * r.count);
      neglected.add(r.neglected);
      used_depth = r.depth;
      if (r.doubling_change >= 0.0) {
        ++checked;
        worst_change = std::max(worst_change, r.doubling_change);
      }
    };
    ordered_map<DecoratedResult>(replicas, ctx.workers, compute, emit);
    const double n = static_cast<double>(replicas);
    const double mean_count = sum.value() / n;
    const double var = replicas > 1 ? std::max(0.0, (sum2.value() - n * mean_count * mean_count) / (n - 1.0)) : 0.0;
    const double se = std::sqrt(var / n);
    const double mean_neglected = neglected.value() / n;
    DecoratedConfig a = base;
    const double analytic = cluster_mean_count(a);
    table << shortest(base.r) << "," << replicas << "," << fmt17(mean_count) << "," << fmt17(se) << ","
          << fmt17(mean_neglected) << "," << fmt17(analytic) << "," << fmt17(used_depth) << "," << fmt17(epsilon)
          << ctx.csv_tail();
    means.push_back(mean_count);
    const std::string tag = "_r" + shortest(base.r);
    auto t = make_report("cluster_mean" + tag, std::abs(mean_count + mean_neglected - analytic) <= 4.0 * se + 1e-9,
                         mean_count, "Monte Carlo count plus neglected mass within 4 standard errors of quadrature",
                         replicas);
    t.extra = {{"stderr", se}, {"analytic", analytic}, {"mean_neglected_mass", mean_neglected}};
    reports.push_back(std::move(t));
    if (checked > 0) {
      reports.push_back(make_report("depth_doubling" + tag, worst_change < 1e-4, worst_change,
                                    "relative change under doubled depth < 1e-4", checked));
    }
  }
  finish(points, ctx.path("cluster_points.csv"));
  finish(samples, ctx.path("cluster_samples.ndjson"));
  finish(table, ctx.path("cluster_table.csv"));
  if (means.size() > 1) {
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    const double ratio = *lo > 0.0 ? *hi / *lo : kInf;
    reports.push_back(make_report("cluster_mean_stable_in_r", ratio < 2.0, ratio, "max/min mean count < 2",
                                  means.size()));
  }
  write_reports(ctx, "cluster_report", reports);
  return exit_for(reports);
}

// Smallest rho whose envelope reaches the estimate at the first r; zero when
// the rho-free part of the envelope already does.
double fit_rho(double r, double y, double lambda, double target) {
  if (!(target > 0.0) || drift_off_envelope(r, y, lambda, 0.0) >= target) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (drift_off_envelope(r, y, lambda, hi) < target && hi < 1e12) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (drift_off_envelope(r, y, lambda, mid) < target ? lo : hi) = mid;
  }
  return hi;
}

int cmd_tidal(Context& ctx) {
  Params p(ctx.cfg);
  const auto rs = p.reals("r", {4.0, 8.0, 12.0});
  const double lambda = p.real("lambda", 1.0);
  const double y = p.real("y", 0.0);
  const auto replicas = p.count("replicas", 1000);
  const double epsilon = p.real("epsilon", 1e-7);
  const auto samples_n = p.count("samples", 0);
  const auto rho_fixed = p.optional_real("rho");
  const auto law = p.offspring();
  ctx.seed = p.count("seed", 0);
  check_config(replicas >= 100, "key 'replicas': must be >= 100");
  check_config(lambda > 0.0, "key 'lambda': must be > 0");
  for (double r : rs) check_config(r >= 0.0, "key 'r': values must be >= 0");
  check_config(std::is_sorted(rs.begin(), rs.end()), "key 'r': values must be increasing");
  ctx.freeze();

  std::vector<DriftOffEstimate> est;
  for (std::size_t ri = 0; ri < rs.size(); ++ri) {
    std::vector<DriftOffReplica> reps;
    reps.reserve(replicas);
    const auto seed_r = derive_key(ctx.seed, ri);
    ordered_map<DriftOffReplica>(
        replicas, ctx.workers,
        [&](std::size_t i) { return drift_off_replica(rs[ri], y, lambda, drift_off_replica_seed(seed_r, i), epsilon, law); },
        [&](std::size_t, const DriftOffReplica& r) { reps.push_back(r); });
    est.push_back(summarize_drift_off(rs[ri], y, lambda, reps));
  }

  std::optional<double> rho = rho_fixed;
  std::size_t fit_index = 0;
  while (!rho && fit_index < rs.size()) {
    if (rs[fit_index] > 1.0 && est[fit_index].probability > 0.0) {
      rho = fit_rho(rs[fit_index], y, lambda, est[fit_index].probability);
    } else {
      ++fit_index;
    }
  }

  auto table = create(ctx.path("tidal_driftoff.csv"));
  table << "r,replicas,hits,probability,ci_low,ci_high,mean_neglected_mass,envelope,rho,seed,config_hash\n";
  std::vector<TestReport> reports;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& e = est[i];
    const double env = (rho && e.r > 1.0) ? drift_off_envelope(e.r, y, lambda, *rho) : kInf;
    table << shortest(e.r) << "," << e.replicas << "," << e.hits << "," << fmt17(e.probability) << ","
          << fmt17(e.ci.low) << "," << fmt17(e.ci.high) << "," << fmt17(e.mean_neglected_mass) << "," << fmt17(env)
          << "," << fmt17(rho.value_or(kInf)) << ctx.csv_tail();
    if (rho && e.r > 1.0 && i != fit_index) {
      auto t = make_report("envelope_r" + shortest(e.r), e.ci.low <= env, e.probability,
                           "estimate interval reaches below the fitted envelope", e.replicas);
      t.extra = {{"envelope", env}, {"rho", *rho}};
      reports.push_back(std::move(t));
    }
  }
  finish(table, ctx.path("tidal_driftoff.csv"));

  bool monotone = true;
  for (std::size_t i = 1; i < est.size(); ++i) monotone = monotone && est[i].probability < est[i - 1].probability;
  reports.push_back(make_report("driftoff_decreasing", monotone, est.empty() ? 0.0 : est.back().probability,
                                "estimates strictly decreasing in r", est.size()));
  if (est.size() >= 2) {
    const bool separated = est.back().ci.high < est.front().ci.low;
    reports.push_back(make_report("driftoff_intervals_separated", separated, est.front().ci.low - est.back().ci.high,
                                  "95% intervals at the smallest and largest r do not overlap", est.size()));
  }

  if (samples_n > 0) {
    auto points = create(ctx.path("tidal_points.csv"));
    points << "r,replica,index,point,seed,config_hash\n";
    auto side = create(ctx.path("tidal_samples.ndjson"));
    side << record_header_line(ctx.cfg) << "\n";
    for (std::size_t ri = 0; ri < rs.size(); ++ri) {
      ordered_map<std::pair<std::string, std::string>>(
          samples_n, ctx.workers,
          [&](std::size_t i) {
            DecoratedConfig c;
            c.r = rs[ri];
            c.lambda = lambda;
            c.view_low = y;
            c.epsilon = epsilon;
            c.offspring = law;
            c.seed = derive_key(derive_key(ctx.seed, 0x7000 + ri), i);
            const auto s = sample_tidal_process(c);
            return std::make_pair(point_rows(c.r, i, s, ctx), point_sample_sidecar(s, ctx.hash));
          },
          [&](std::size_t, const std::pair<std::string, std::string>& r) {
            points << r.first;
            side << r.second << "\n";
          });
    }
    finish(points, ctx.path("tidal_points.csv"));
    finish(side, ctx.path("tidal_samples.ndjson"));
  }
  write_reports(ctx, "tidal_report", reports);
  return exit_for(reports);
}

// --- fkpp -------------------------------------------------------------------

struct MeshResult {
  double dx = 0.0;
  double residual = 0.0;
  double tail_c = 0.0;
  WaveProfile wave;
};

int cmd_fkpp(Context& ctx) {
  Params p(ctx.cfg);
  const auto law = p.offspring();
  FrontTrackOptions fo;
  fo.dx = p.real("dx", 0.05);
  fo.dt_ratio = p.real("dt_ratio", 0.4);
  fo.x_left = p.real("x_left", -50.0);
  fo.right_pad = p.real("right_pad", 100.0);
  fo.record_every = p.real("record_every", 1.0);
  const double final_time = p.real("final_time", 200.0);
  const double fit_low = p.real("fit_low", 20.0);
  const double fit_high = p.real("fit_high", final_time);
  const auto meshes = p.reals("wave_dx", {0.1, 0.05, 0.025});
  const double wave_min = p.real("wave_x_min", -40.0);
  const double wave_max = p.real("wave_x_max", 60.0);
  const auto anchor_cfg = p.optional_real("anchor");
  const auto records_path = ctx.input(p.text("records", "none"));
  const double speed_tol = p.real("speed_tolerance", 0.01);
  const double log_tol = p.real("log_coefficient_tolerance", 0.15);
  const double residual_tol = p.real("residual_tolerance", 1e-2);
  ctx.seed = p.count("seed", 0);
  check_config(fo.dx > 0.0 && fo.dt_ratio > 0.0 && fo.dt_ratio <= 0.5, "dx > 0 and dt_ratio in (0, 0.5] required");
  check_config(final_time > fit_low && fit_high > fit_low, "fit window must lie inside (0, final_time]");
  check_config(!meshes.empty(), "key 'wave_dx': at least one mesh");
  ctx.freeze();

  double anchor = 0.0;
  std::string anchor_source = "zero";
  std::optional<EstimatedConstant> mc_c;
  if (anchor_cfg) {
    anchor = *anchor_cfg;
    anchor_source = "config";
  } else if (records_path != "none") {
    auto in = open_in(records_path);
    const auto records = read_records(in);
    std::vector<double> maxima;
    for (const auto& r : records) maxima.push_back(r.max_centered);
    check_config(!maxima.empty(), "records file is empty");
    anchor = quantile(maxima, 0.5);
    anchor_source = "records median";
    mc_c = estimate_C(std::span<const RunRecord>(records));
  }

  std::vector<TestReport> reports;
  const auto track = track_front(law, final_time, fo);
  const auto fit = fit_front(track, fit_low, fit_high);
  {
    auto front = create(ctx.path("fkpp_front.csv"));
    front << "t,front,seed,config_hash\n";
    for (std::size_t i = 0; i < track.times.size(); ++i) {
      front << fmt17(track.times[i]) << "," << fmt17(track.fronts[i]) << ctx.csv_tail();
    }
    finish(front, ctx.path("fkpp_front.csv"));
  }
  const double expected_log = 3.0 / (2.0 * kSqrt2);
  {
    auto t = make_report("front_speed", std::abs(fit.speed - kSqrt2) <= speed_tol * kSqrt2, fit.speed,
                         "free-fit speed within " + shortest(speed_tol * 100.0) + "% of sqrt2", fit.points);
    t.extra = {{"log_coefficient_free", fit.log_coef_free}};
    reports.push_back(std::move(t));
    auto c = make_report("front_log_coefficient", std::abs(fit.log_coef - expected_log) <= log_tol * expected_log,
                         fit.log_coef, "constrained log coefficient within " + shortest(log_tol * 100.0) +
                                           "% of 3/(2 sqrt2)",
                         fit.points);
    c.extra = {{"expected", expected_log}, {"intercept", fit.intercept}};
    reports.push_back(std::move(c));
  }

  std::vector<MeshResult> waves(meshes.size());
  ordered_map<MeshResult>(
      meshes.size(), ctx.workers,
      [&](std::size_t i) {
        WaveOptions wo;
        wo.dx = meshes[i];
        wo.x_min = wave_min;
        wo.x_max = wave_max;
        MeshResult m;
        m.dx = meshes[i];
        m.wave = compute_wave(law, wo);
        m.residual = wave_residual(m.wave, law);
        WaveTailOptions to;
        to.anchor = anchor;
        m.tail_c = tail_fit(m.wave, to).value;
        return m;
      },
      [&](std::size_t i, const MeshResult& m) { waves[i] = m; });

  bool decreasing = true;
  for (std::size_t i = 1; i < waves.size(); ++i) {
    if (meshes[i] < meshes[i - 1]) decreasing = decreasing && waves[i].residual < waves[i - 1].residual;
  }
  const auto finest = std::min_element(waves.begin(), waves.end(), [](const auto& a, const auto& b) { return a.dx < b.dx; });
  {
    auto t = make_report("wave_residual", finest->residual < residual_tol && decreasing, finest->residual,
                         "residual < " + shortest(residual_tol) + " on the finest mesh and decreasing under refinement",
                         waves.size());
    for (const auto& w : waves) t.extra.push_back({"residual_dx_" + shortest(w.dx), w.residual});
    reports.push_back(std::move(t));
  }
  {
    auto wave = create(ctx.path("fkpp_wave.csv"));
    wave << "x,u,seed,config_hash\n";
    const auto& w = finest->wave;
    for (std::size_t j = 0; j < w.values.size(); ++j) {
      wave << fmt17(w.x_min + static_cast<double>(j) * w.dx) << "," << fmt17(w.values[j]) << ctx.csv_tail();
    }
    finish(wave, ctx.path("fkpp_wave.csv"));
  }
  {
    auto profile = create(ctx.path("fkpp_profile.csv"));
    profile << "x,u,seed,config_hash\n";
    const auto& f = track.final_profile;
    for (std::size_t j = 0; j < f.values.size(); ++j) {
      profile << fmt17(f.x_min + static_cast<double>(j) * f.dx) << "," << fmt17(f.values[j]) << ctx.csv_tail();
    }
    finish(profile, ctx.path("fkpp_profile.csv"));
  }
  if (mc_c) {
    const double rel = std::abs(finest->tail_c - mc_c->value) / mc_c->value;
    auto t = make_report("tail_constant_consistency", rel < 0.25, rel,
                         "wave tail constant within 25% of the Monte Carlo estimate", waves.size());
    t.extra = {{"wave_c", finest->tail_c}, {"monte_carlo_c", mc_c->value}, {"monte_carlo_stderr", mc_c->stderr_},
               {"anchor", anchor}};
    reports.push_back(std::move(t));
  }

  JsonWriter w;
  w.begin_object()
      .field("config_hash", hex64(ctx.hash))
      .field("seed", ctx.seed)
      .key("front_fit")
      .begin_object()
      .field("speed", fit.speed)
      .field("log_coefficient_free", fit.log_coef_free)
      .field("log_coefficient", fit.log_coef)
      .field("intercept", fit.intercept)
      .field("t_low", fit.t_low)
      .field("t_high", fit.t_high)
      .field("points", static_cast<std::uint64_t>(fit.points))
      .field("dx", track.dx)
      .field("dt", track.dt)
      .end_object()
      .key("wave")
      .begin_array();
  for (const auto& m : waves) {
    w.begin_object().field("dx", m.dx).field("residual", m.residual).field("tail_c", m.tail_c).end_object();
  }
  w.end_array().field("anchor", anchor).field("anchor_source", anchor_source).end_object();
  write_file(ctx.path("fkpp_summary.json"), w.str() + "\n");
  write_reports(ctx, "fkpp_report", reports);
  return exit_for(reports);
}

// --- report -----------------------------------------------------------------

int cmd_report(Context& ctx) {
  Params p(ctx.cfg);
  ctx.seed = p.count("seed", 0);
  const auto dir = ctx.input(p.text("inputs", "."));
  ctx.freeze();
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("report input directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    const auto name = e.path().filename().string();
    if (name.size() > 12 && name.ends_with("_report.json")) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no *_report.json files in " + dir);

  std::vector<TestReport> all;
  JsonWriter w;
  w.begin_object().field("config_hash", hex64(ctx.hash)).field("seed", ctx.seed).key("sources").begin_array();
  for (const auto& f : files) {
    auto in = open_in(f);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(f + ": " + e.what());
    }
    w.begin_object()
        .field("file", fs::path(f).filename().string())
        .field("config_hash", j.value("config_hash", ""))
        .field("seed", j.value("seed", std::uint64_t{0}))
        .end_object();
    for (const auto& t : j.at("tests")) {
      TestReport r;
      r.name = fs::path(f).stem().string() + "." + t.at("name").get<std::string>();
      r.statistic = json_real(t.at("statistic"));
      r.p_value = json_real(t.at("p_value"));
      r.criterion = t.at("criterion").get<std::string>();
      r.passed = t.at("passed").get<bool>();
      r.sample_size = t.at("sample_size").get<std::size_t>();
      r.excluded = t.at("excluded").get<std::size_t>();
      for (const auto& [k, v] : t.at("extra").items()) r.extra.push_back({k, json_real(v)});
      if (t.contains("note")) r.note = t.at("note").get<std::string>();
      all.push_back(std::move(r));
    }
  }
  w.end_array().key("tests").begin_array();
  for (auto& t : all) {
    t.config_hash = ctx.hash;
    write_report_json(w, t);
  }
  w.end_array().end_object();
  write_file(ctx.path("summary.json"), w.str() + "\n");
  write_file(ctx.path("summary.txt"), reports_text(all, ctx.hash, ctx.seed));
  std::cout << reports_text(all, ctx.hash, ctx.seed);
  return exit_for(all);
}

// --- driver -----------------------------------------------------------------

struct CommandSpec {
  const char* name;
  const char* help;
  std::vector<const char*> keys;  // exposed as --key flags
  int (*run)(Context&);
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<CommandSpec> commands = {
      {"simulate", "simulate branching Brownian motion replicas",
       {"horizon", "replicas", "seed", "offspring", "barrier_offset", "checkpoints", "save_trees", "thin_q",
        "thin_floor", "thin_top", "record_top", "max_nodes"},
       cmd_simulate},
      {"thin", "q-thinning of saved trees with oracle and stability checks",
       {"trees", "q", "seed", "oracle", "ultrametric", "decomposition", "matrix_cap", "window", "r_d", "r_g",
        "stability_y", "stability_points", "stability_min_fraction"},
       cmd_thin},
      {"stats", "Poisson statistics on thinned extremal processes",
       {"records", "thinned", "c_hat", "seed", "k", "count_level", "input", "phi", "top", "rank_n", "z_floor"},
       cmd_stats},
      {"cluster", "sample the cluster process", {"r", "lambda", "y", "replicas", "seed", "epsilon", "depth"},
       cmd_cluster},
      {"tidal", "drift-off table for the tidal process", {"r", "lambda", "y", "replicas", "seed", "epsilon", "rho", "samples"},
       cmd_tidal},
      {"fkpp", "F-KPP front tracking and traveling wave",
       {"dx", "final_time", "fit_low", "fit_high", "wave_dx", "anchor", "records", "offspring", "seed"}, cmd_fkpp},
      {"report", "collect *_report.json files into one summary", {"inputs", "seed"}, cmd_report},
  };

  CLI::App app{"bbmlab: branching Brownian motion extremal process lab"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  unsigned workers = 0;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--set", overrides, "override one key (key=value); repeatable");
  app.add_option("--out", out_dir, "output directory (default $BBMLAB_OUT or .)");
  app.add_option("--workers", workers, "worker threads (default: hardware concurrency)");

  std::vector<std::map<std::string, std::string>> key_values(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    auto* sub = app.add_subcommand(commands[c].name, commands[c].help);
    for (const char* key : commands[c].keys) sub->add_option(flag_name(key), key_values[c][key], std::string("sets ") + key);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    Context ctx;
    if (!config_path.empty()) ctx.cfg = Config::load(config_path);
    ctx.cfg.apply(overrides);
    for (const auto& [key, value] : key_values[which]) {
      if (subs[which]->count(flag_name(key)) > 0) ctx.cfg.set(key, value);
    }
    if (out_dir.empty()) {
      const char* env = std::getenv("BBMLAB_OUT");
      out_dir = (env && *env) ? env : ".";
    }
    ctx.out_dir = out_dir;
    ctx.workers = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
    return commands[which].run(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "bbmlab: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "bbmlab: file error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bbmlab: invalid parameter: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CapacityError& e) {
    std::cerr << "bbmlab: " << e.what() << " (raise max_nodes or add a barrier)\n";
    return kExitUsage;
  } catch (const EmptyConfigurationError& e) {
    std::cerr << "bbmlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NotConvergedError& e) {
    std::cerr << "bbmlab: " << e.what() << "\n";
    return kExitFailed;
  } catch (const std::exception& e) {
    std::cerr << "bbmlab: " << e.what() << "\n";
    return kExitIo;
  }
}
