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

// Genealogical distances between leaves and the q-thinning of the extremal
// configuration.
//
// Two leaves belong to the same q-cluster iff the branch time of their most
// recent common ancestor, divided by the horizon, is >= q. Both the matrix and
// the tree algorithms evaluate exactly `end_time / horizon >= q` so that they
// agree bit for bit, including at the boundary.

#ifndef BBMLAB_GENEALOGY_HPP_
#define BBMLAB_GENEALOGY_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/error.hpp"

namespace bbmlab {

/// Branch time of the most recent common ancestor of two leaves; the horizon
/// when i == j.
inline double overlap(const BranchingTree& tree, NodeId i, NodeId j) {
  if (!tree.is_leaf(i) || !tree.is_leaf(j)) {
    throw std::invalid_argument("overlap: unknown leaf id");
  }
  if (i == j) return tree.horizon();
  const auto& nodes = tree.nodes();
  // Ancestors always have smaller ids, so walking the larger id up meets the LCA.
  NodeId a = i;
  NodeId b = j;
  while (a != b) {
    if (a > b) {
      a = nodes[a].parent;
    } else {
      b = nodes[b].parent;
    }
  }
  return nodes[a].end_time;
}

/// Leaf ids ordered as in leaf_configuration: decreasing position, ties by id.
inline std::vector<NodeId> rank_order(const BranchingTree& tree) {
  std::vector<NodeId> ids(tree.leaves());
  const auto& nodes = tree.nodes();
  std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    const double xa = nodes[a].end_position;
    const double xb = nodes[b].end_position;
    return xa != xb ? xa > xb : a < b;
  });
  return ids;
}

class OverlapMatrix {
 public:
  OverlapMatrix(std::size_t n, double horizon) : n_(n), horizon_(horizon), data_(n * n, 0.0) {
    for (std::size_t i = 0; i < n; ++i) data_[i * n + i] = 1.0;
  }

  std::size_t size() const noexcept { return n_; }
  double horizon() const noexcept { return horizon_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * n_, n_}; }

  /// Submatrix on the given indices (in that order).
  OverlapMatrix restrict_to(std::span<const std::size_t> idx) const {
    OverlapMatrix out(idx.size(), horizon_);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = (*this)(idx[a], idx[b]);
    }
    return out;
  }

 private:
  std::size_t n_;
  double horizon_;
  std::vector<double> data_;
};

inline constexpr std::size_t kDefaultMatrixCap = 4096;

/// Full matrix of overlap / horizon with rows in the given leaf order.
inline OverlapMatrix normalized_overlap_matrix(const BranchingTree& tree, std::span<const NodeId> order,
                                               std::size_t cap = kDefaultMatrixCap) {
  const std::size_t n = order.size();
  if (n == 0) throw std::invalid_argument("normalized_overlap_matrix: no leaves");
  if (n > cap) {
    throw CapacityError("normalized_overlap_matrix: leaf count exceeds matrix cap " + std::to_string(cap), n, 0.0);
  }
  const auto& nodes = tree.nodes();
  std::vector<std::size_t> index_of(nodes.size(), n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!tree.is_leaf(order[r])) throw std::invalid_argument("normalized_overlap_matrix: order holds a non-leaf");
    index_of[order[r]] = r;
  }

  // Leaves listed in depth-first order make every subtree a contiguous range.
  std::vector<std::size_t> dfs_leaves;
  std::vector<std::size_t> range_begin(nodes.size());
  std::vector<std::size_t> range_end(nodes.size());
  {
    std::vector<std::pair<NodeId, bool>> stack{{tree.root(), false}};
    while (!stack.empty()) {
      auto [id, expanded] = stack.back();
      stack.pop_back();
      const auto& nd = nodes[id];
      if (expanded) {
        range_end[id] = dfs_leaves.size();
        continue;
      }
      range_begin[id] = dfs_leaves.size();
      if (nd.child_count == 0) {
        if (index_of[id] != n) dfs_leaves.push_back(index_of[id]);
        range_end[id] = dfs_leaves.size();
        continue;
      }
      stack.push_back({id, true});
      for (std::uint32_t c = nd.child_count; c-- > 0;) stack.push_back({nd.first_child + c, false});
    }
  }

  OverlapMatrix q(n, tree.horizon());
  const double h = tree.horizon();
  for (NodeId id = 0; id < nodes.size(); ++id) {
    const auto& nd = nodes[id];
    if (nd.child_count < 2) continue;
    const double value = nd.end_time / h;
    for (std::uint32_t a = 0; a < nd.child_count; ++a) {
      const NodeId ca = nd.first_child + a;
      for (std::uint32_t b = a + 1; b < nd.child_count; ++b) {
        const NodeId cb = nd.first_child + b;
        for (std::size_t u = range_begin[ca]; u < range_end[ca]; ++u) {
          for (std::size_t v = range_begin[cb]; v < range_end[cb]; ++v) {
            q(dfs_leaves[u], dfs_leaves[v]) = value;
            q(dfs_leaves[v], dfs_leaves[u]) = value;
          }
        }
      }
    }
  }
  return q;
}

inline OverlapMatrix normalized_overlap_matrix(const BranchingTree& tree, std::size_t cap = kDefaultMatrixCap) {
  const auto order = rank_order(tree);
  return normalized_overlap_matrix(tree, order, cap);
}

/// Exhaustive check of Q_ik >= min(Q_ij, Q_jk) over all triples, plus symmetry
/// and the unit diagonal. Returns the number of violated triples.
inline std::size_t ultrametric_violations(const OverlapMatrix& q) {
  const std::size_t n = q.size();
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (q(i, i) != 1.0) ++bad;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (q(i, j) != q(j, i)) ++bad;
    }
  }
  // Replace entries by their rank among the distinct values; comparisons are
  // unchanged and 16-bit lanes vectorize well.
  std::vector<double> distinct;
  distinct.reserve(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : q.row(i)) distinct.push_back(v);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() > 32767 || n > 46340) {
    throw CapacityError("ultrametric_violations: matrix too large", n, 0.0);
  }
  std::vector<std::int16_t> r(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      r[i * n + k] = static_cast<std::int16_t>(std::lower_bound(distinct.begin(), distinct.end(), q(i, k)) - distinct.begin());
    }
  }
  // The inequality is symmetric in (i, k), so k > i suffices.
  for (std::size_t j = 0; j < n; ++j) {
    const std::int16_t* row_j = r.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t* row_i = r.data() + i * n;
      const std::int16_t a = row_i[j];
      for (std::size_t s = i + 1; s < n; s += 16384) {
        const std::size_t e = std::min(n, s + 16384);
        std::int16_t local = 0;
        for (std::size_t k = s; k < e; ++k) {
          const std::int16_t m = a < row_j[k] ? a : row_j[k];
          local = static_cast<std::int16_t>(local + (row_i[k] < m ? 1 : 0));
        }
        bad += static_cast<std::uint16_t>(local);
      }
    }
  }
  return bad;
}

/// The thinned process: a decreasing subsequence of the configuration.
/// selected_indices are 0-based ranks into the source configuration.
struct ThinnedProcess {
  std::vector<double> positions;
  std::vector<std::size_t> selected_indices;
  double q = 0.0;
  double horizon = 0.0;

  std::size_t size() const noexcept { return positions.size(); }
  bool operator==(const ThinnedProcess& o) const {
    return positions == o.positions && selected_indices == o.selected_indices && q == o.q;
  }
};

inline void check_q(double q, const char* where) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument(std::string(where) + ": q must lie in (0, 1)");
}

/// Literal greedy recursion: keep index j iff every previously kept index l has
/// overlap(l, j) < q. The output simply ends when no admissible index is left.
inline ThinnedProcess q_thinning_matrix(std::span<const double> positions, const OverlapMatrix& q_bar, double q) {
  check_q(q, "q_thinning_matrix");
  if (positions.size() != q_bar.size()) throw std::invalid_argument("q_thinning_matrix: misaligned sizes");
  ThinnedProcess out;
  out.q = q;
  out.horizon = q_bar.horizon();
  const std::size_t n = positions.size();
  for (std::size_t j = 0; j < n; ++j) {
    bool admissible = true;
    for (std::size_t l : out.selected_indices) {
      if (!(q_bar(l, j) < q)) {
        admissible = false;
        break;
      }
    }
    if (admissible) {
      out.selected_indices.push_back(j);
      out.positions.push_back(positions[j]);
    }
  }
  return out;
}

inline ThinnedProcess q_thinning_matrix(const ExtremalConfiguration& config, const OverlapMatrix& q_bar, double q) {
  return q_thinning_matrix(std::span<const double>(config.positions), q_bar, q);
}

/// For each node, the topmost ancestor-or-self whose branch time / horizon >= q
/// (kNoNode when there is none). Leaves share a value iff they are q-related.
inline std::vector<NodeId> cluster_roots(const BranchingTree& tree, double q) {
  const auto& nodes = tree.nodes();
  const double h = tree.horizon();
  std::vector<NodeId> root(nodes.size(), kNoNode);
  for (NodeId id = 0; id < nodes.size(); ++id) {
    const NodeId p = nodes[id].parent;
    if (p != kNoNode && root[p] != kNoNode) {
      root[id] = root[p];
    } else if (nodes[id].end_time / h >= q) {
      root[id] = id;
    }
  }
  return root;
}

/// Cluster root of a single leaf, found by walking up its ancestry.
inline NodeId cluster_root_of(const BranchingTree& tree, NodeId leaf, double q) {
  const auto& nodes = tree.nodes();
  const double h = tree.horizon();
  NodeId cur = leaf;
  while (nodes[cur].parent != kNoNode && nodes[nodes[cur].parent].end_time / h >= q) cur = nodes[cur].parent;
  return cur;
}

struct ClusterDecomposition {
  /// Blocks of 0-based ranks, each sorted; blocks ordered by representative.
  std::vector<std::vector<std::size_t>> blocks;
  std::vector<std::size_t> representatives;
  double q = 0.0;
  double horizon = 0.0;
};

inline ClusterDecomposition cluster_decomposition(const BranchingTree& tree, const ExtremalConfiguration& config,
                                                  double q) {
  check_q(q, "cluster_decomposition");
  const auto roots = cluster_roots(tree, q);
  std::unordered_map<NodeId, std::size_t> block_of;
  ClusterDecomposition out;
  out.q = q;
  out.horizon = tree.horizon();
  for (std::size_t r = 0; r < config.size(); ++r) {
    const NodeId cr = roots[config.leaf_ids[r]];
    auto [it, inserted] = block_of.try_emplace(cr, out.blocks.size());
    if (inserted) {
      out.blocks.emplace_back();
      out.representatives.push_back(r);
    }
    out.blocks[it->second].push_back(r);
  }
  return out;
}

inline ClusterDecomposition cluster_decomposition(const BranchingTree& tree, double q) {
  return cluster_decomposition(tree, leaf_configuration(tree), q);
}

/// Cuts the tree at time q * horizon and keeps the maximal leaf of every
/// hanging subtree.
inline ThinnedProcess q_thinning_tree(const BranchingTree& tree, const ExtremalConfiguration& config, double q) {
  check_q(q, "q_thinning_tree");
  const auto roots = cluster_roots(tree, q);
  std::vector<char> seen(tree.nodes().size(), 0);
  ThinnedProcess out;
  out.q = q;
  out.horizon = tree.horizon();
  for (std::size_t r = 0; r < config.size(); ++r) {
    const NodeId cr = roots[config.leaf_ids[r]];
    if (!seen[cr]) {
      seen[cr] = 1;
      out.selected_indices.push_back(r);
      out.positions.push_back(config.positions[r]);
    }
  }
  return out;
}

inline ThinnedProcess q_thinning_tree(const BranchingTree& tree, double q) {
  return q_thinning_tree(tree, leaf_configuration(tree), q);
}

/// The thinned process restricted to (y, inf). Only leaves above y are
/// visited: a cluster's representative lies above y iff some member does.
inline ThinnedProcess q_thinning_above(const BranchingTree& tree, const ExtremalConfiguration& config, double q,
                                       double y) {
  check_q(q, "q_thinning_above");
  ThinnedProcess out;
  out.q = q;
  out.horizon = tree.horizon();
  std::vector<NodeId> taken;
  for (std::size_t r = 0; r < config.size() && config.positions[r] > y; ++r) {
    const NodeId cr = cluster_root_of(tree, config.leaf_ids[r], q);
    if (std::find(taken.begin(), taken.end(), cr) == taken.end()) {
      taken.push_back(cr);
      out.selected_indices.push_back(r);
      out.positions.push_back(config.positions[r]);
    }
  }
  return out;
}

/// The first `k` points of the thinned process (fewer if the configuration
/// runs out). Visits leaves in rank order only until k clusters are found.
inline ThinnedProcess q_thinning_top(const BranchingTree& tree, const ExtremalConfiguration& config, double q,
                                     std::size_t k) {
  check_q(q, "q_thinning_top");
  ThinnedProcess out;
  out.q = q;
  out.horizon = tree.horizon();
  std::vector<NodeId> taken;
  for (std::size_t r = 0; r < config.size() && out.positions.size() < k; ++r) {
    const NodeId cr = cluster_root_of(tree, config.leaf_ids[r], q);
    if (std::find(taken.begin(), taken.end(), cr) == taken.end()) {
      taken.push_back(cr);
      out.selected_indices.push_back(r);
      out.positions.push_back(config.positions[r]);
    }
  }
  return out;
}

/// Branch times of all most-recent-common-ancestors of pairs in `leaves`.
inline std::vector<double> pairwise_branch_times(const BranchingTree& tree, std::span<const NodeId> leaves) {
  const auto& nodes = tree.nodes();
  // For every visited ancestor remember the first child it was entered from.
  std::unordered_map<NodeId, NodeId> entered_from;
  std::vector<NodeId> split_nodes;
  for (NodeId leaf : leaves) {
    NodeId child = leaf;
    NodeId cur = nodes[leaf].parent;
    while (cur != kNoNode) {
      auto [it, inserted] = entered_from.try_emplace(cur, child);
      if (!inserted) {
        if (it->second != child && it->second != kNoNode) {
          split_nodes.push_back(cur);
          it->second = kNoNode;  // already registered as a split
        }
        break;
      }
      child = cur;
      cur = nodes[cur].parent;
    }
  }
  std::vector<double> times;
  times.reserve(split_nodes.size());
  for (NodeId id : split_nodes) times.push_back(nodes[id].end_time);
  std::sort(times.begin(), times.end());
  return times;
}

/// True iff two leaves above m(t) + y have their common ancestor branching in
/// the open interval (r_d, t - r_g).
inline bool has_intermediate_ancestry(const BranchingTree& tree, const ExtremalConfiguration& config, double y,
                                      double r_d, double r_g) {
  const double t = tree.horizon();
  if (r_d + r_g >= t) return false;
  std::vector<NodeId> top;
  for (std::size_t r = 0; r < config.size() && config.positions[r] > y; ++r) top.push_back(config.leaf_ids[r]);
  for (double s : pairwise_branch_times(tree, top)) {
    if (s > r_d && s < t - r_g) return true;
  }
  return false;
}

struct TreeWithConfiguration {
  const BranchingTree* tree;
  const ExtremalConfiguration* config;
};

/// Fraction of realizations with an extremal pair whose ancestry splits in
/// (r_d, t - r_g).
inline double genealogical_gap_fraction(std::span<const TreeWithConfiguration> runs, double y, double r_d,
                                        double r_g) {
  if (!(r_d >= 0.0 && r_g >= 0.0)) throw std::invalid_argument("genealogical_gap_fraction: r_d, r_g must be >= 0");
  if (runs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& run : runs) {
    const double t = run.tree->horizon();
    if (r_d + r_g >= t) continue;
    if (has_intermediate_ancestry(*run.tree, *run.config, y, r_d, r_g)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(runs.size());
}

/// Equally spaced grid of `points` values spanning [r_d / t, 1 - r_g / t].
inline std::vector<double> stability_grid(double t, double r_d, double r_g, int points) {
  std::vector<double> grid;
  const double lo = r_d / t;
  const double hi = 1.0 - r_g / t;
  for (int i = 0; i < points; ++i) {
    grid.push_back(points == 1 ? lo : lo + (hi - lo) * i / (points - 1));
  }
  return grid;
}

/// True iff the thinned process above y is the same for every q in the grid.
inline bool thinning_stable_above(const BranchingTree& tree, const ExtremalConfiguration& config, double y,
                                  std::span<const double> q_grid) {
  if (q_grid.empty()) return true;
  const auto first = q_thinning_above(tree, config, q_grid.front(), y);
  for (std::size_t i = 1; i < q_grid.size(); ++i) {
    if (q_thinning_above(tree, config, q_grid[i], y).selected_indices != first.selected_indices) return false;
  }
  return true;
}

}  // namespace bbmlab

#endif  // BBMLAB_GENEALOGY_HPP_
