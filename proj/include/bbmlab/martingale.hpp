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

#ifndef BBMLAB_MARTINGALE_HPP_
#define BBMLAB_MARTINGALE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>

#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/numeric.hpp"

namespace bbmlab {

/// Exponents below this are flushed to zero and counted.
inline constexpr double kUnderflowExponent = -700.0;

struct MartingaleSums {
  double z = 0.0;
  double z2 = 0.0;
  std::size_t flushed = 0;
};

/// Z(s) = sum (sqrt2 s - x) e^{-sqrt2 (sqrt2 s - x)} and
/// Z2(s) = sum (sqrt2 s - x)^2 e^{-2 sqrt2 (sqrt2 s - x)} over the given positions.
inline MartingaleSums martingale_sums(std::span<const double> positions, double s) {
  CompensatedSum z, z2;
  MartingaleSums out;
  for (double x : positions) {
    const double gap = kSqrt2 * s - x;
    const double e1 = -kSqrt2 * gap;
    if (e1 < kUnderflowExponent) {
      ++out.flushed;
      continue;
    }
    z.add(gap * std::exp(e1));
    const double e2 = 2.0 * e1;
    if (e2 >= kUnderflowExponent) {
      z2.add(gap * gap * std::exp(e2));
    }
  }
  out.z = z.value();
  out.z2 = z2.value();
  return out;
}

inline double derivative_martingale(const BranchingTree& tree, double s, std::size_t* flushed = nullptr) {
  const auto sums = martingale_sums(tree.positions_at(s), s);
  if (flushed) *flushed = sums.flushed;
  return sums.z;
}

inline double second_order_sum(const BranchingTree& tree, double s, std::size_t* flushed = nullptr) {
  const auto sums = martingale_sums(tree.positions_at(s), s);
  if (flushed) *flushed = sums.flushed;
  return sums.z2;
}

struct RunRecord {
  std::uint64_t seed = 0;
  double horizon = 0.0;
  double z = 0.0;
  double z2 = 0.0;
  double max_centered = 0.0;
  std::size_t leaf_count = 0;
  std::size_t pruned_count = 0;
  std::uint64_t config_hash = 0;
};

/// Summary of the realization at time s (horizon or checkpoint), s > 1.
inline RunRecord make_run_record(const BranchingTree& tree, double s, std::uint64_t config_hash = 0) {
  const auto pos = tree.positions_at(s);
  const auto sums = martingale_sums(pos, s);
  RunRecord r;
  r.seed = tree.seed();
  r.horizon = s;
  r.z = sums.z;
  r.z2 = sums.z2;
  r.max_centered = pos.empty() ? -std::numeric_limits<double>::infinity()
                               : *std::max_element(pos.begin(), pos.end()) - front_centering(s);
  r.leaf_count = pos.size();
  r.pruned_count = tree.pruned_count();
  r.config_hash = config_hash;
  return r;
}

}  // namespace bbmlab

#endif  // BBMLAB_MARTINGALE_HPP_
