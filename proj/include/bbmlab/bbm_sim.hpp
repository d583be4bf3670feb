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

// Exact event-driven simulation of branching Brownian motion.
//
// Positions are sampled only at branch events, at checkpoint times and at the
// horizon; Brownian paths between those times are never discretized. Every
// node draws from its own counter-based stream keyed by its genealogical path,
// so a subtree's realization does not depend on how the rest of the tree was
// traversed or pruned.

#ifndef BBMLAB_BBM_SIM_HPP_
#define BBMLAB_BBM_SIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbmlab/error.hpp"
#include "bbmlab/numeric.hpp"
#include "bbmlab/rng.hpp"

namespace bbmlab {

/// Centering of the extremal process: sqrt(2) t - 3/(2 sqrt(2)) log t.
/// Only defined for t > 1, where the logarithmic correction is negative.
inline double front_centering(double t) {
  if (!(t > 1.0)) {
    throw std::domain_error("front_centering: requires t > 1, got " + std::to_string(t));
  }
  return kSqrt2 * t - 3.0 / (2.0 * kSqrt2) * std::log(t);
}

/// Offspring distribution with finite support {1, ..., k_max}.
class OffspringLaw {
 public:
  /// probabilities[k - 1] = p_k. Requires sum p_k = 1 and sum k p_k = 2.
  explicit OffspringLaw(std::vector<double> probabilities) : OffspringLaw(std::move(probabilities), true) {}

  static OffspringLaw binary() { return OffspringLaw({0.0, 1.0}); }

  /// Skips the mean-two normalization. Only for degenerate laws used to probe
  /// the simulator (e.g. p_1 = 1, a single lineage).
  static OffspringLaw with_any_mean(std::vector<double> probabilities) {
    return OffspringLaw(std::move(probabilities), false);
  }

  double p(int k) const noexcept {
    return (k >= 1 && k <= max_offspring()) ? probs_[static_cast<std::size_t>(k - 1)] : 0.0;
  }
  int max_offspring() const noexcept { return static_cast<int>(probs_.size()); }
  std::span<const double> probabilities() const noexcept { return probs_; }
  double mean() const noexcept { return mean_; }
  /// K = sum k (k - 1) p_k.
  double second_factorial_moment() const noexcept { return second_factorial_; }

  /// Inverse-CDF draw from a uniform on (0, 1).
  int sample(double u) const noexcept {
    for (std::size_t i = 0; i + 1 < cdf_.size(); ++i) {
      if (u < cdf_[i]) return static_cast<int>(i + 1);
    }
    return max_offspring();
  }

  /// sum p_k u^k, the generating function; the F-KPP reaction term is g(u) - u.
  double generating(double u) const noexcept {
    double acc = 0.0;
    for (std::size_t i = probs_.size(); i-- > 0;) acc = (acc + probs_[i]) * u;
    return acc;
  }
  double generating_derivative(double u) const noexcept {
    double acc = 0.0;
    for (std::size_t i = probs_.size(); i-- > 0;) acc = acc * u + static_cast<double>(i + 1) * probs_[i];
    return acc;
  }

  bool operator==(const OffspringLaw& other) const { return probs_ == other.probs_; }

 private:
  OffspringLaw(std::vector<double> probabilities, bool require_mean_two) : probs_(std::move(probabilities)) {
    if (probs_.empty()) throw std::invalid_argument("OffspringLaw: empty support");
    CompensatedSum total, mean, fact2;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double p = probs_[i];
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("OffspringLaw: p_k outside [0,1]");
      const double k = static_cast<double>(i + 1);
      total.add(p);
      mean.add(k * p);
      fact2.add(k * (k - 1.0) * p);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) throw std::invalid_argument("OffspringLaw: probabilities must sum to 1");
    if (require_mean_two && std::abs(mean.value() - 2.0) > 1e-12) {
      throw std::invalid_argument("OffspringLaw: mean offspring must equal 2");
    }
    mean_ = mean.value();
    second_factorial_ = fact2.value();
    CompensatedSum running;
    for (double p : probs_) {
      running.add(p);
      cdf_.push_back(running.value());
    }
  }

  std::vector<double> probs_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double second_factorial_ = 0.0;
};

struct SimConfig {
  double horizon = 1.0;
  OffspringLaw offspring = OffspringLaw::binary();
  std::uint64_t seed = 0;
  /// Prune particles below sqrt(2) s - barrier_offset at branch events.
  std::optional<double> barrier_offset;
  /// Strictly increasing times in (0, horizon] where alive positions are kept.
  std::vector<double> checkpoint_times;
  std::size_t max_nodes = 50'000'000;

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("SimConfig: horizon must be > 0");
    if (barrier_offset && !(*barrier_offset >= 0.0)) throw std::invalid_argument("SimConfig: barrier_offset must be >= 0");
    for (std::size_t i = 0; i < checkpoint_times.size(); ++i) {
      const double c = checkpoint_times[i];
      if (!(c > 0.0 && c <= horizon)) throw std::invalid_argument("SimConfig: checkpoint outside (0, horizon]");
      if (i > 0 && !(c > checkpoint_times[i - 1])) {
        throw std::invalid_argument("SimConfig: checkpoint times must be strictly increasing");
      }
    }
  }
};

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct TreeNode {
  double birth_time;
  double end_time;
  double birth_position;
  double end_position;
  NodeId parent;
  NodeId first_child;
  std::uint32_t child_count;
  bool pruned;

  bool is_leaf() const noexcept { return child_count == 0 && !pruned; }
};

/// Positions of all particles alive at one checkpoint, ordered by node id.
struct CheckpointRecord {
  double time = 0.0;
  std::vector<NodeId> nodes;
  std::vector<double> positions;
};

/// Immutable record of one realization. Children of a node are stored
/// contiguously and always have larger ids than their parent.
class BranchingTree {
 public:
  BranchingTree() = default;

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  NodeId root() const noexcept { return 0; }
  double horizon() const noexcept { return horizon_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const OffspringLaw& offspring() const noexcept { return offspring_; }
  std::optional<double> barrier_offset() const noexcept { return barrier_; }
  std::size_t pruned_count() const noexcept { return pruned_count_; }
  /// Unpruned leaves in increasing id order.
  const std::vector<NodeId>& leaves() const noexcept { return leaves_; }
  const std::vector<CheckpointRecord>& checkpoints() const noexcept { return checkpoints_; }

  bool is_leaf(NodeId id) const { return id < nodes_.size() && nodes_[id].is_leaf(); }

  /// Alive positions at time s; s must be the horizon or a checkpoint time.
  std::vector<double> positions_at(double s) const {
    for (const auto& cp : checkpoints_) {
      if (cp.time == s) return cp.positions;
    }
    if (s == horizon_) {
      std::vector<double> out;
      out.reserve(leaves_.size());
      for (NodeId id : leaves_) out.push_back(nodes_[id].end_position);
      return out;
    }
    throw std::invalid_argument("positions_at: time " + std::to_string(s) + " was not recorded");
  }

  bool operator==(const BranchingTree& o) const {
    if (nodes_.size() != o.nodes_.size() || horizon_ != o.horizon_ || seed_ != o.seed_) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& a = nodes_[i];
      const auto& b = o.nodes_[i];
      if (a.birth_time != b.birth_time || a.end_time != b.end_time || a.birth_position != b.birth_position ||
          a.end_position != b.end_position || a.parent != b.parent || a.first_child != b.first_child ||
          a.child_count != b.child_count || a.pruned != b.pruned) {
        return false;
      }
    }
    return pruned_count_ == o.pruned_count_;
  }

 private:
  template <typename Policy>
  friend void simulate_into(BranchingTree&, const SimConfig&, Policy&&);
  friend BranchingTree tree_from_nodes(std::vector<TreeNode>, double, std::uint64_t, OffspringLaw,
                                       std::optional<double>, std::size_t);

  void finalize_leaves() {
    leaves_.clear();
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].is_leaf()) leaves_.push_back(i);
    }
  }

  std::vector<TreeNode> nodes_;
  std::vector<NodeId> leaves_;
  std::vector<CheckpointRecord> checkpoints_;
  double horizon_ = 0.0;
  std::uint64_t seed_ = 0;
  OffspringLaw offspring_ = OffspringLaw::binary();
  std::optional<double> barrier_;
  std::size_t pruned_count_ = 0;
};

/// Rebuilds a tree from a node list (deserialization). Validates continuity.
inline BranchingTree tree_from_nodes(std::vector<TreeNode> nodes, double horizon, std::uint64_t seed,
                                     OffspringLaw law, std::optional<double> barrier, std::size_t pruned_count) {
  if (nodes.empty()) throw std::invalid_argument("tree_from_nodes: no nodes");
  for (NodeId i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (i == 0 && (n.parent != kNoNode || n.birth_time != 0.0 || n.birth_position != 0.0)) {
      throw std::invalid_argument("tree_from_nodes: malformed root");
    }
    if (i > 0) {
      if (n.parent >= i) throw std::invalid_argument("tree_from_nodes: parent must precede child");
      const auto& p = nodes[n.parent];
      if (n.birth_time != p.end_time || n.birth_position != p.end_position) {
        throw std::invalid_argument("tree_from_nodes: discontinuous edge at node " + std::to_string(i));
      }
    }
  }
  BranchingTree t;
  t.nodes_ = std::move(nodes);
  t.horizon_ = horizon;
  t.seed_ = seed;
  t.offspring_ = std::move(law);
  t.barrier_ = barrier;
  t.pruned_count_ = pruned_count;
  t.finalize_leaves();
  return t;
}

/// Never prunes.
struct NoPruning {
  bool operator()(double /*time*/, double /*position*/) const noexcept { return false; }
};

/// Prunes particles that sit below the line sqrt(2) s - offset at a branch event.
struct LinearBarrier {
  double offset;
  bool operator()(double time, double position) const noexcept { return position < kSqrt2 * time - offset; }
};

inline constexpr std::uint64_t kRootKey = 0x243F6A8885A308D3ULL;

/// Fills `tree` with one realization; `prune(time, position)` is consulted at
/// every branch event before offspring are created. Reuses `tree`'s buffers.
template <typename Policy>
void simulate_into(BranchingTree& tree, const SimConfig& config, Policy&& prune) {
  config.validate();
  tree.nodes_.clear();
  tree.checkpoints_.clear();
  tree.horizon_ = config.horizon;
  tree.seed_ = config.seed;
  tree.offspring_ = config.offspring;
  tree.barrier_ = config.barrier_offset;
  tree.pruned_count_ = 0;
  for (double c : config.checkpoint_times) tree.checkpoints_.push_back({c, {}, {}});

  struct Pending {
    NodeId id;
    std::uint64_t key;
  };
  thread_local std::vector<Pending> stack;
  stack.clear();

  const double horizon = config.horizon;
  const auto& cps = config.checkpoint_times;
  tree.nodes_.push_back({0.0, 0.0, 0.0, 0.0, kNoNode, kNoNode, 0, false});
  stack.push_back({0, kRootKey});

  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    Stream rng(config.seed, cur.key);
    TreeNode& node = tree.nodes_[cur.id];
    const double birth = node.birth_time;
    const double life = rng.exponential();
    const double end = std::min(birth + life, horizon);

    double t = birth;
    double x = node.birth_position;
    auto it = std::upper_bound(cps.begin(), cps.end(), birth);
    for (; it != cps.end() && *it < end; ++it) {
      x += std::sqrt(*it - t) * rng.normal();
      t = *it;
      auto& rec = tree.checkpoints_[static_cast<std::size_t>(it - cps.begin())];
      rec.nodes.push_back(cur.id);
      rec.positions.push_back(x);
    }
    x += std::sqrt(end - t) * rng.normal();
    if (it != cps.end() && *it == end) {
      auto& rec = tree.checkpoints_[static_cast<std::size_t>(it - cps.begin())];
      rec.nodes.push_back(cur.id);
      rec.positions.push_back(x);
    }
    node.end_time = end;
    node.end_position = x;

    if (end >= horizon) continue;
    if (prune(end, x)) {
      node.pruned = true;
      ++tree.pruned_count_;
      continue;
    }
    const int k = config.offspring.sample(rng.uniform());
    const auto first = static_cast<NodeId>(tree.nodes_.size());
    if (tree.nodes_.size() + static_cast<std::size_t>(k) > config.max_nodes) {
      throw CapacityError("simulate_tree: node capacity exceeded", tree.nodes_.size(), end);
    }
    node.first_child = first;
    node.child_count = static_cast<std::uint32_t>(k);
    // `node` may dangle after the push_backs below.
    for (int c = 0; c < k; ++c) {
      tree.nodes_.push_back({end, end, x, x, cur.id, kNoNode, 0, false});
    }
    for (int c = k; c-- > 0;) {
      stack.push_back({first + static_cast<NodeId>(c), derive_key(cur.key, static_cast<std::uint64_t>(c))});
    }
  }

  for (auto& rec : tree.checkpoints_) {
    std::vector<std::size_t> order(rec.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rec.nodes[a] < rec.nodes[b]; });
    std::vector<NodeId> ids(order.size());
    std::vector<double> pos(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      ids[i] = rec.nodes[order[i]];
      pos[i] = rec.positions[order[i]];
    }
    rec.nodes = std::move(ids);
    rec.positions = std::move(pos);
  }
  tree.finalize_leaves();
}

template <typename Policy>
BranchingTree simulate_tree(const SimConfig& config, Policy&& prune) {
  BranchingTree tree;
  simulate_into(tree, config, std::forward<Policy>(prune));
  return tree;
}

inline BranchingTree simulate_tree(const SimConfig& config) {
  if (config.barrier_offset) return simulate_tree(config, LinearBarrier{*config.barrier_offset});
  return simulate_tree(config, NoPruning{});
}

/// Leaf positions centered by the front, sorted strictly decreasing.
struct ExtremalConfiguration {
  std::vector<double> positions;
  std::vector<NodeId> leaf_ids;
  double horizon = 0.0;

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }
};

/// Orders leaves by decreasing position; equal positions put the smaller leaf id first.
inline ExtremalConfiguration leaf_configuration(const BranchingTree& tree) {
  const auto& leaves = tree.leaves();
  if (leaves.empty()) {
    throw EmptyConfigurationError("leaf_configuration: every lineage was pruned; barrier too aggressive");
  }
  const double m = front_centering(tree.horizon());
  std::vector<NodeId> ids(leaves.begin(), leaves.end());
  const auto& nodes = tree.nodes();
  std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    const double xa = nodes[a].end_position;
    const double xb = nodes[b].end_position;
    return xa != xb ? xa > xb : a < b;
  });
  ExtremalConfiguration out;
  out.horizon = tree.horizon();
  out.leaf_ids = std::move(ids);
  out.positions.reserve(out.leaf_ids.size());
  for (NodeId id : out.leaf_ids) out.positions.push_back(nodes[id].end_position - m);
  return out;
}

/// Restriction to the window (low, high]; high may be +infinity.
inline ExtremalConfiguration leaves_in_window(const ExtremalConfiguration& config, double low,
                                              double high = std::numeric_limits<double>::infinity()) {
  if (!(low < high)) throw std::invalid_argument("leaves_in_window: requires low < high");
  ExtremalConfiguration out;
  out.horizon = config.horizon;
  for (std::size_t i = 0; i < config.size(); ++i) {
    const double x = config.positions[i];
    if (x > low && x <= high) {
      out.positions.push_back(x);
      out.leaf_ids.push_back(config.leaf_ids[i]);
    }
  }
  return out;
}

}  // namespace bbmlab

#endif  // BBMLAB_BBM_SIM_HPP_
