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

// Samplers for the exponential-density Poisson process and for Poisson atoms
// decorated by independent branching Brownian motions drifting at -sqrt(2).
//
// Decorated samplers only build what can reach the view window. An atom or a
// particle is dropped once the expected number of its descendants landing in
// the window falls below `epsilon`; the dropped expectation is accumulated in
// PointSample::neglected_mass. Atoms are generated in unit slabs with one
// random stream per slab, so a deeper truncation adds atoms without moving the
// shallow ones.

#ifndef BBMLAB_POINT_PROCESS_HPP_
#define BBMLAB_POINT_PROCESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/numeric.hpp"
#include "bbmlab/rng.hpp"

namespace bbmlab {

enum class ProcessKind { kPpp, kCluster, kTidal };

inline const char* to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::kPpp:
      return "ppp";
    case ProcessKind::kCluster:
      return "cluster";
    case ProcessKind::kTidal:
      return "tidal";
  }
  return "?";
}

inline ProcessKind process_kind_from_string(const std::string& s) {
  if (s == "ppp") return ProcessKind::kPpp;
  if (s == "cluster") return ProcessKind::kCluster;
  if (s == "tidal") return ProcessKind::kTidal;
  throw std::invalid_argument("unknown process kind: " + s);
}

struct PointSample {
  std::vector<double> points;  // decreasing
  double low = 0.0;
  double high = std::numeric_limits<double>::infinity();
  double intensity_scale = 0.0;
  std::uint64_t seed = 0;
  ProcessKind kind = ProcessKind::kPpp;
  double r = 0.0;

  // Decorated processes only.
  double truncation_depth = 0.0;
  double epsilon = 0.0;
  double atom_floor = 0.0;  // atoms below this were screened out
  std::vector<double> atoms;  // generated atoms, decreasing
  std::vector<std::uint32_t> atom_hits;  // points each atom put in the window
  double neglected_mass = 0.0;
  std::size_t pruned_particles = 0;

  std::size_t atoms_reaching_window() const {
    return static_cast<std::size_t>(std::count_if(atom_hits.begin(), atom_hits.end(), [](auto h) { return h > 0; }));
  }
};

inline constexpr std::uint64_t kAtomStreamTag = 0xA7A7A7A7ULL;

inline std::uint64_t poisson_count(Stream& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> d(mean);
  return d(rng);
}

/// PPP with intensity lambda sqrt2 e^{-sqrt2 x} on [low, inf).
inline PointSample sample_exponential_ppp(double lambda, double low, std::uint64_t seed) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("sample_exponential_ppp: lambda must be > 0");
  if (!std::isfinite(low)) throw std::invalid_argument("sample_exponential_ppp: low must be finite");
  PointSample s;
  s.kind = ProcessKind::kPpp;
  s.low = low;
  s.intensity_scale = lambda;
  s.seed = seed;
  Stream rng(seed, kAtomStreamTag);
  const auto n = poisson_count(rng, lambda * std::exp(-kSqrt2 * low));
  s.points.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) s.points.push_back(low + rng.exponential(kSqrt2));
  std::sort(s.points.begin(), s.points.end(), std::greater<>());
  return s;
}

/// Mean of the PPP count in [low, inf).
inline double exponential_ppp_mean(double lambda, double low) { return lambda * std::exp(-kSqrt2 * low); }

// --- decorated processes ----------------------------------------------------

struct DecoratedConfig {
  double r = 0.0;
  double lambda = 1.0;
  double view_low = 0.0;
  /// Atoms are generated on [-truncation_depth, top); <= 0 selects the default.
  double truncation_depth = 0.0;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  OffspringLaw offspring = OffspringLaw::binary();
  std::size_t max_nodes = 20'000'000;
};

inline double default_cluster_depth(double r) { return 3.0 * r / kSqrt2 + 10.0; }
inline double default_tidal_depth(double r) { return kSqrt2 * r + 10.0 * std::sqrt(r); }

/// Expected number of points at time tau, started from one particle at
/// `start`, that end above `level` (Brownian displacement, no drift).
inline double expected_above(double tau, double start, double level, double mean_offspring) {
  if (tau <= 0.0) return start >= level ? 1.0 : 0.0;
  return std::exp((mean_offspring - 1.0) * tau) * normal_sf((level - start) / std::sqrt(tau));
}

/// Expected window count contributed by one atom at eta.
inline double atom_first_moment(const DecoratedConfig& c, double eta) {
  return expected_above(c.r, 0.0, c.view_low - eta + kSqrt2 * c.r, c.offspring.mean());
}

namespace detail {

// Cumulative cluster-atom mass on [-d, 0): integral of s e^{sqrt2 s} over [0, d].
inline double cluster_mass_to_depth(double d) {
  const double a = kSqrt2;
  return ((a * d - 1.0) * std::exp(a * d) + 1.0) / (a * a);
}

// Lowest eta in [lo, hi] with first moment >= epsilon (first moment increases in eta).
inline double screening_floor(const DecoratedConfig& c, double lo, double hi) {
  if (atom_first_moment(c, lo) >= c.epsilon) return lo;
  if (atom_first_moment(c, hi) < c.epsilon) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (atom_first_moment(c, mid) >= c.epsilon ? hi : lo) = mid;
  }
  return hi;
}

struct ScreeningPrune {
  double r;
  double level;  // window threshold in cluster coordinates
  double mean;
  double epsilon;
  double* neglected;
  bool operator()(double time, double x) const {
    const double m = mean * expected_above(r - time, x, level, mean);
    if (m < epsilon) {
      *neglected += m;
      return true;
    }
    return false;
  }
};

template <typename Density>
double slab_sampler_atom(Stream& rng, double top, double bottom, Density&& density, double bound) {
  // Rejection from the exponential envelope e^{-sqrt2 eta} on [bottom, top).
  const double w = top - bottom;
  for (;;) {
    const double u = rng.uniform();
    const double eta = bottom - std::log1p(-u * (1.0 - std::exp(-kSqrt2 * w))) / kSqrt2;
    const double e = std::min(eta, top);
    if (rng.uniform() * bound <= density(e)) return e;
  }
}

// Runs the atom-plus-decoration pipeline. `on_point` is called with each
// emitted point; returning true stops the run early.
template <typename OnPoint>
void run_decorated(const DecoratedConfig& c, ProcessKind kind, PointSample& out, OnPoint&& on_point) {
  if (!(c.lambda > 0.0) || !std::isfinite(c.lambda)) throw std::invalid_argument("decorated sampler: lambda must be > 0");
  if (!(c.r >= 0.0) || !std::isfinite(c.r)) throw std::invalid_argument("decorated sampler: r must be >= 0");
  if (!std::isfinite(c.view_low)) throw std::invalid_argument("decorated sampler: view_low must be finite");
  if (!(c.epsilon >= 0.0)) throw std::invalid_argument("decorated sampler: epsilon must be >= 0");
  double depth = c.truncation_depth;
  if (depth <= 0.0) depth = kind == ProcessKind::kCluster ? default_cluster_depth(c.r) : default_tidal_depth(c.r);
  if (!std::isfinite(depth)) throw std::invalid_argument("decorated sampler: infinite truncation is divergent");

  out.kind = kind;
  out.low = c.view_low;
  out.intensity_scale = c.lambda;
  out.seed = c.seed;
  out.r = c.r;
  out.truncation_depth = depth;
  out.epsilon = c.epsilon;

  const double top = kind == ProcessKind::kCluster ? 0.0 : std::numeric_limits<double>::infinity();
  const double floor = screening_floor(c, -depth, kind == ProcessKind::kCluster ? 0.0 : std::max(0.0, c.view_low + 1.0));
  out.atom_floor = floor;

  auto density = [&](double eta) {
    return kind == ProcessKind::kCluster ? c.lambda * (-eta) * std::exp(-kSqrt2 * eta) : c.lambda * std::exp(-kSqrt2 * eta);
  };
  if (floor > -depth) {
    out.neglected_mass += simpson([&](double eta) { return density(eta) * atom_first_moment(c, eta); }, -depth, floor, 4000);
  }

  BranchingTree tree;
  const double mean = c.offspring.mean();
  bool stop = false;

  // Slab 0 is [0, top); slab k >= 1 is [-k, -k+1). Slabs are visited top-down.
  const auto last_slab = static_cast<std::int64_t>(std::ceil(depth));
  for (std::int64_t k = 0; k <= last_slab && !stop; ++k) {
    double s_top, s_bot;
    if (k == 0) {
      if (kind == ProcessKind::kCluster) continue;
      s_top = top;
      s_bot = 0.0;
    } else {
      s_top = -static_cast<double>(k - 1);
      s_bot = std::max(-static_cast<double>(k), -depth);
    }
    if (s_top <= floor) break;
    Stream rng(c.seed, derive_key(kAtomStreamTag, static_cast<std::uint64_t>(k)));
    double slab_mass;
    if (kind == ProcessKind::kCluster) {
      slab_mass = c.lambda * (cluster_mass_to_depth(-s_bot) - cluster_mass_to_depth(-s_top));
    } else if (k == 0) {
      slab_mass = c.lambda / kSqrt2;
    } else {
      slab_mass = c.lambda * (std::exp(-kSqrt2 * s_bot) - std::exp(-kSqrt2 * s_top)) / kSqrt2;
    }
    const auto n = poisson_count(rng, slab_mass);
    std::vector<double> etas;
    etas.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      double eta;
      if (kind == ProcessKind::kTidal) {
        eta = k == 0 ? rng.exponential(kSqrt2)
                     : s_bot - std::log1p(-rng.uniform() * (1.0 - std::exp(-kSqrt2 * (s_top - s_bot)))) / kSqrt2;
        eta = std::min(eta, s_top);
      } else {
        // (-eta) e^{-sqrt2 eta} <= (-s_bot) e^{-sqrt2 eta} on the slab.
        eta = slab_sampler_atom(
            rng, s_top, s_bot, [&](double e) { return -e; }, -s_bot);
      }
      etas.push_back(eta);
    }
    std::sort(etas.begin(), etas.end(), std::greater<>());

    for (std::size_t i = 0; i < etas.size() && !stop; ++i) {
      const double eta = etas[i];
      if (eta < floor) break;
      const std::uint64_t atom_seed = derive_key(derive_key(c.seed, static_cast<std::uint64_t>(k)), i);
      std::uint32_t hits = 0;
      if (c.r == 0.0) {
        if (eta >= c.view_low) {
          ++hits;
          stop = on_point(eta);
        }
      } else {
        SimConfig sc;
        sc.horizon = c.r;
        sc.offspring = c.offspring;
        sc.seed = atom_seed;
        sc.max_nodes = c.max_nodes;
        const double level = c.view_low - eta + kSqrt2 * c.r;
        ScreeningPrune prune{c.r, level, mean, c.epsilon, &out.neglected_mass};
        simulate_into(tree, sc, prune);
        out.pruned_particles += tree.pruned_count();
        for (NodeId leaf : tree.leaves()) {
          const double p = eta + tree.node(leaf).end_position - kSqrt2 * c.r;
          if (p >= c.view_low) {
            ++hits;
            if (on_point(p)) {
              stop = true;
              break;
            }
          }
        }
      }
      out.atoms.push_back(eta);
      out.atom_hits.push_back(hits);
    }
  }
}

inline PointSample sample_decorated(const DecoratedConfig& c, ProcessKind kind) {
  PointSample out;
  run_decorated(c, kind, out, [&](double p) {
    out.points.push_back(p);
    return false;
  });
  std::sort(out.points.begin(), out.points.end(), std::greater<>());
  return out;
}

}  // namespace detail

/// Atoms with density lambda (-x) e^{-sqrt2 x} on [-depth, 0), each decorated by
/// a BBM run for time r and shifted by -sqrt2 r; points in [view_low, inf).
inline PointSample sample_cluster_process(const DecoratedConfig& c) {
  return detail::sample_decorated(c, ProcessKind::kCluster);
}

/// Atoms with density lambda e^{-sqrt2 x} on [-depth, inf), decorated as above.
inline PointSample sample_tidal_process(const DecoratedConfig& c) {
  return detail::sample_decorated(c, ProcessKind::kTidal);
}

/// Expected count of the cluster process in [view_low, inf), by quadrature of
/// the first moment over the atom density (no screening).
inline double cluster_mean_count(const DecoratedConfig& c) {
  const double depth = c.truncation_depth > 0.0 ? c.truncation_depth : default_cluster_depth(c.r);
  if (c.r == 0.0) {
    const double lo = std::max(-depth, c.view_low);
    if (lo >= 0.0) return 0.0;
    return c.lambda * (detail::cluster_mass_to_depth(-lo));
  }
  return simpson([&](double eta) { return c.lambda * (-eta) * std::exp(-kSqrt2 * eta) * atom_first_moment(c, eta); },
                 -depth, 0.0, 20000);
}

/// Expected count of the tidal process in [view_low, inf) (no screening).
inline double tidal_mean_count(const DecoratedConfig& c) {
  const double depth = c.truncation_depth > 0.0 ? c.truncation_depth : default_tidal_depth(c.r);
  if (c.r == 0.0) return c.lambda * std::exp(-kSqrt2 * std::max(-depth, c.view_low)) / kSqrt2;
  const double hi = c.view_low + kSqrt2 * c.r + 40.0 * std::sqrt(c.r) + 40.0;
  return simpson([&](double eta) { return c.lambda * std::exp(-kSqrt2 * eta) * atom_first_moment(c, eta); }, -depth, hi,
                 40000);
}

struct DriftOffEstimate {
  double r = 0.0;
  double y = 0.0;
  double lambda = 0.0;
  std::size_t replicas = 0;
  std::size_t hits = 0;
  double probability = 0.0;
  Interval ci;
  /// Mean neglected first moment over replicas that ran to completion.
  double mean_neglected_mass = 0.0;
};

struct DriftOffReplica {
  bool hit = false;
  double neglected_mass = 0.0;
};

/// One tidal replica, stopped at the first point in [y, inf).
inline DriftOffReplica drift_off_replica(double r, double y, double lambda, std::uint64_t replica_seed,
                                         double epsilon = 1e-7, const OffspringLaw& offspring = OffspringLaw::binary()) {
  DecoratedConfig c;
  c.r = r;
  c.lambda = lambda;
  c.view_low = y;
  c.epsilon = epsilon;
  c.offspring = offspring;
  c.seed = replica_seed;
  PointSample s;
  DriftOffReplica out;
  detail::run_decorated(c, ProcessKind::kTidal, s, [&](double) {
    out.hit = true;
    return true;
  });
  out.neglected_mass = s.neglected_mass;
  return out;
}

/// Combines replicas in order; neglected mass is averaged over replicas without a hit.
inline DriftOffEstimate summarize_drift_off(double r, double y, double lambda, std::span<const DriftOffReplica> reps) {
  DriftOffEstimate est;
  est.r = r;
  est.y = y;
  est.lambda = lambda;
  est.replicas = reps.size();
  CompensatedSum neglected;
  std::size_t complete = 0;
  for (const auto& x : reps) {
    if (x.hit) {
      ++est.hits;
    } else {
      neglected += x.neglected_mass;
      ++complete;
    }
  }
  est.probability = reps.empty() ? 0.0 : static_cast<double>(est.hits) / static_cast<double>(reps.size());
  est.ci = wilson_interval(est.hits, reps.size());
  est.mean_neglected_mass = complete ? neglected.value() / static_cast<double>(complete) : 0.0;
  return est;
}

inline std::uint64_t drift_off_replica_seed(std::uint64_t seed, std::size_t i) { return derive_key(seed, i); }

/// Monte Carlo estimate of P[tidal process has a point in [y, inf)].
inline DriftOffEstimate drift_off_probability(double r, double y, double lambda, std::size_t replicas,
                                              std::uint64_t seed, double epsilon = 1e-7,
                                              OffspringLaw offspring = OffspringLaw::binary()) {
  if (replicas < 100) throw std::invalid_argument("drift_off_probability: needs at least 100 replicas");
  std::vector<DriftOffReplica> reps;
  reps.reserve(replicas);
  for (std::size_t i = 0; i < replicas; ++i) {
    reps.push_back(drift_off_replica(r, y, lambda, drift_off_replica_seed(seed, i), epsilon, offspring));
  }
  return summarize_drift_off(r, y, lambda, reps);
}

/// Markov-type envelope for the drift-off probability: the atom density
/// integrated against rho X exp(-sqrt2 X - X^2/(2r) + (3/(2 sqrt2)) X log r / r)
/// for the maximum exceeding the front by X (probability capped at 1).
inline double drift_off_envelope(double r, double y, double lambda, double rho) {
  if (!(r > 1.0)) throw std::invalid_argument("drift_off_envelope: needs r > 1");
  const double shift = front_centering(r) - kSqrt2 * r;  // -(3/(2 sqrt2)) log r
  const double kc = 3.0 / (2.0 * kSqrt2);
  auto tail = [&](double X) {
    if (X <= 1.0) return 1.0;
    return std::min(1.0, rho * X * std::exp(-kSqrt2 * X - X * X / (2.0 * r) + kc * X * std::log(r) / r));
  };
  // Atom at eta needs max - m(r) >= y - eta - shift.
  const double lo = y - shift - 60.0 - 20.0 * std::sqrt(r);
  const double hi = y - shift + 60.0 + 20.0 * std::sqrt(r);
  auto integrand = [&](double X) { return tail(X) * lambda * std::exp(-kSqrt2 * (y - shift - X)); };
  const double mass = simpson(integrand, lo, hi, 40000);
  return std::min(1.0, mass);
}

}  // namespace bbmlab

#endif  // BBMLAB_POINT_PROCESS_HPP_
