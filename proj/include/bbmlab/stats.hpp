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

// Goodness-of-fit machinery for comparing extremal configurations with
// Poisson processes of intensity lambda sqrt2 e^{-sqrt2 x} dx.
//
// Every randomized step (bootstrap, permutation) takes an explicit seed.

#ifndef BBMLAB_STATS_HPP_
#define BBMLAB_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "bbmlab/martingale.hpp"
#include "bbmlab/numeric.hpp"
#include "bbmlab/point_process.hpp"
#include "bbmlab/rng.hpp"

namespace bbmlab {

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::string criterion;  // human-readable pass rule
  bool passed = false;
  std::size_t sample_size = 0;
  std::size_t excluded = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, double>> extra;
  std::string note;

  double get(const std::string& key) const {
    for (const auto& [k, v] : extra) {
      if (k == key) return v;
    }
    throw std::out_of_range("TestReport: no field " + key);
  }
};

// --- distribution tests -----------------------------------------------------

/// P[K > x] for the Kolmogorov distribution.
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    s += (j % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

struct KsResult {
  double d = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample KS with the asymptotic p-value and Stephens' small-n correction.
inline KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
  if (xs.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), xs.size()};
}

inline KsResult ks_exponential(std::vector<double> xs) {
  return ks_one_sample(std::move(xs), [](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x); });
}

inline KsResult ks_uniform(std::vector<double> xs) {
  return ks_one_sample(std::move(xs), [](double x) { return std::clamp(x, 0.0, 1.0); });
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double rn = std::sqrt(ne);
  return {d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), static_cast<std::size_t>(ne)};
}

/// Upper tail of the chi-square distribution.
inline double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

// --- tail constant ----------------------------------------------------------

struct EstimatedConstant {
  double value = 0.0;
  double stderr_ = 0.0;
  std::string method;
  double window_low = 0.0;
  double window_high = 0.0;
};

struct TailFitOptions {
  double window_low = 1.0;
  double window_high = 2.5;
  double step = 0.05;
  std::size_t bootstrap = 200;
  std::uint64_t seed = 0;
};

namespace detail {

inline double tail_fit_log_c(std::span<const double> sorted, const TailFitOptions& o) {
  const double n = static_cast<double>(sorted.size());
  CompensatedSum acc;
  std::size_t used = 0;
  for (double x = o.window_low; x <= o.window_high + 1e-12; x += o.step) {
    // Empirical survival P[max > x].
    const auto above = static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x));
    if (above == 0.0 || x <= 0.0) continue;
    acc.add(std::log(above / n) - std::log(x) + kSqrt2 * x);
    ++used;
  }
  if (used == 0) throw std::domain_error("estimate_C: empty tail in fit window");
  return acc.value() / static_cast<double>(used);
}

}  // namespace detail

/// Least-squares fit, with unit slope fixed, of log P[max > x] against
/// log(x e^{-sqrt2 x}) + log C over the window; stderr by seeded bootstrap.
inline EstimatedConstant estimate_C(std::span<const double> max_centered, const TailFitOptions& o = {}) {
  if (max_centered.empty()) throw std::domain_error("estimate_C: no samples");
  if (!(o.window_low < o.window_high) || !(o.step > 0.0)) throw std::invalid_argument("estimate_C: bad window");
  std::vector<double> s(max_centered.begin(), max_centered.end());
  std::sort(s.begin(), s.end());
  EstimatedConstant out;
  out.method = "tail-fit";
  out.window_low = o.window_low;
  out.window_high = o.window_high;
  out.value = std::exp(detail::tail_fit_log_c(s, o));
  if (o.bootstrap > 1) {
    Stream rng(o.seed, 0xB007);
    std::vector<double> reps;
    std::vector<double> b(s.size());
    for (std::size_t k = 0; k < o.bootstrap; ++k) {
      for (auto& v : b) v = s[static_cast<std::size_t>(rng.uniform() * static_cast<double>(s.size()))];
      std::sort(b.begin(), b.end());
      try {
        reps.push_back(std::exp(detail::tail_fit_log_c(b, o)));
      } catch (const std::domain_error&) {
      }
    }
    out.stderr_ = std::sqrt(variance(reps));
  }
  return out;
}

/// Tail fit over run records; requires >= 1000 records at one horizon t >= 10.
inline EstimatedConstant estimate_C(std::span<const RunRecord> records, const TailFitOptions& o = {}) {
  if (records.size() < 1000) throw std::invalid_argument("estimate_C: needs at least 1000 records");
  const double t = records.front().horizon;
  if (!(t >= 10.0)) throw std::invalid_argument("estimate_C: needs horizon >= 10");
  std::vector<double> m;
  m.reserve(records.size());
  for (const auto& r : records) {
    if (r.horizon != t) throw std::invalid_argument("estimate_C: records at different horizons");
    m.push_back(r.max_centered);
  }
  return estimate_C(std::span<const double>(m), o);
}

// --- homogenization and Poissonianity ---------------------------------------

/// u_i = lambda e^{-sqrt2 x_i}; decreasing x maps to increasing u.
inline std::vector<double> homogenize(std::span<const double> xs, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("homogenize: lambda must be > 0");
  std::vector<double> u;
  u.reserve(xs.size());
  for (double x : xs) u.push_back(lambda * std::exp(-kSqrt2 * x));
  return u;
}

/// Successive spacings u_1, u_2 - u_1, ... of the first k mapped points.
inline std::vector<double> homogenized_spacings(std::span<const double> decreasing_points, double lambda, std::size_t k) {
  const auto u = homogenize(decreasing_points.first(std::min(k, decreasing_points.size())), lambda);
  std::vector<double> s;
  double prev = 0.0;
  for (double v : u) {
    s.push_back(v - prev);
    prev = v;
  }
  return s;
}

/// What one run contributes to the suite: its Z and its thinned points,
/// decreasing, complete above `floor`.
struct ThinnedRun {
  double z = 0.0;
  std::vector<double> points;
  double floor = -std::numeric_limits<double>::infinity();
};

struct SuiteOptions {
  std::size_t k = 5;
  double count_level = -1.0;
  double ks_alpha = 0.01;
  double dispersion_low = 0.85;
  double dispersion_high = 1.15;
  double z_floor = 1e-300;
};

/// Pooled KS of the first k homogenized spacings (lambda = c Z per run) and
/// the conditional dispersion index of counts above `count_level`.
inline std::vector<TestReport> poissonianity_suite(std::span<const ThinnedRun> runs, double c_hat,
                                                   const SuiteOptions& o = {}, const std::string& label = "") {
  if (o.k == 0 || o.k > 10) throw std::invalid_argument("poissonianity_suite: k must be in 1..10");
  if (!(c_hat > 0.0)) throw std::invalid_argument("poissonianity_suite: c_hat must be > 0");
  std::vector<double> spacings;
  std::size_t excluded_z = 0, short_runs = 0, used = 0;
  CompensatedSum disp;
  std::size_t disp_n = 0, floor_violations = 0;
  for (const auto& r : runs) {
    if (!(r.z > o.z_floor)) {
      ++excluded_z;
      continue;
    }
    const double lambda = c_hat * r.z;
    if (r.points.size() >= o.k) {
      const auto s = homogenized_spacings(r.points, lambda, o.k);
      spacings.insert(spacings.end(), s.begin(), s.end());
      ++used;
    } else {
      ++short_runs;
    }
    if (r.floor > o.count_level) {
      ++floor_violations;
      continue;
    }
    const double mu = lambda * std::exp(-kSqrt2 * o.count_level);
    const auto n = static_cast<double>(std::count_if(r.points.begin(), r.points.end(), [&](double x) { return x > o.count_level; }));
    disp.add((n - mu) * (n - mu) / mu);
    ++disp_n;
  }
  std::vector<TestReport> out;
  {
    TestReport t;
    t.name = label + "ks_spacings";
    t.criterion = "p > " + std::to_string(o.ks_alpha);
    t.excluded = excluded_z + short_runs;
    if (!spacings.empty()) {
      const auto ks = ks_exponential(spacings);
      t.statistic = ks.d;
      t.p_value = ks.p_value;
      t.sample_size = spacings.size();
      t.passed = ks.p_value > o.ks_alpha;
      std::vector<double> by_rank(o.k, 0.0);
      for (std::size_t i = 0; i < spacings.size(); ++i) by_rank[i % o.k] += spacings[i];
      for (std::size_t j = 0; j < o.k; ++j) {
        t.extra.push_back({"mean_spacing_rank_" + std::to_string(j + 1), by_rank[j] / static_cast<double>(used)});
      }
    }
    t.extra.push_back({"runs_used", static_cast<double>(used)});
    t.extra.push_back({"excluded_low_z", static_cast<double>(excluded_z)});
    t.extra.push_back({"excluded_short", static_cast<double>(short_runs)});
    out.push_back(std::move(t));
  }
  {
    TestReport t;
    t.name = label + "dispersion";
    t.criterion = "index in [" + std::to_string(o.dispersion_low) + ", " + std::to_string(o.dispersion_high) + "]";
    t.excluded = excluded_z + floor_violations;
    t.sample_size = disp_n;
    if (disp_n > 0) {
      t.statistic = disp.value() / static_cast<double>(disp_n);
      // Two-sided chi-square calibration of the Pearson sum.
      const double sf = chi_square_sf(disp.value(), static_cast<double>(disp_n));
      t.p_value = 2.0 * std::min(sf, 1.0 - sf);
      t.passed = t.statistic >= o.dispersion_low && t.statistic <= o.dispersion_high;
    }
    t.extra.push_back({"count_level", o.count_level});
    out.push_back(std::move(t));
  }
  return out;
}


/// Negative control: points placed so that every homogenized spacing is 1.
inline std::vector<ThinnedRun> lattice_control_runs(std::span<const ThinnedRun> runs, double c_hat, double floor) {
  std::vector<ThinnedRun> out;
  for (const auto& r : runs) {
    ThinnedRun l;
    l.z = r.z;
    l.floor = floor;
    if (r.z > 0.0) {
      const double lambda = c_hat * r.z;
      for (int j = 1;; ++j) {
        const double x = (std::log(lambda) - std::log(static_cast<double>(j))) / kSqrt2;
        if (x < floor || j > 100000) break;
        l.points.push_back(x);
      }
    }
    out.push_back(std::move(l));
  }
  return out;
}

// --- superposition ----------------------------------------------------------

/// Union of two thinned runs; genealogically disjoint, so no cluster merges.
inline ThinnedRun merge_runs(const ThinnedRun& a, const ThinnedRun& b) {
  ThinnedRun m;
  m.z = a.z + b.z;
  m.floor = std::max(a.floor, b.floor);
  m.points.reserve(a.points.size() + b.points.size());
  std::merge(a.points.begin(), a.points.end(), b.points.begin(), b.points.end(), std::back_inserter(m.points),
             std::greater<>());
  std::erase_if(m.points, [&](double x) { return x < m.floor; });
  return m;
}

struct EnergyOptions {
  std::size_t k = 5;
  std::size_t permutations = 199;
  std::uint64_t seed = 0;
};

namespace detail {

// Feature vector: spacings mapped through the Exp(1) cdf.
inline bool gap_features(const ThinnedRun& r, double c_hat, std::size_t k, std::vector<double>& out) {
  if (!(r.z > 0.0) || r.points.size() < k) return false;
  for (double s : homogenized_spacings(r.points, c_hat * r.z, k)) out.push_back(-std::expm1(-s));
  return true;
}

}  // namespace detail

/// Energy-distance permutation test between top-gap vectors of two groups.
inline TestReport energy_two_sample(std::span<const ThinnedRun> a, std::span<const ThinnedRun> b, double c_hat,
                                    const EnergyOptions& o = {}, const std::string& name = "superposition") {
  std::vector<double> feats;
  std::size_t na = 0, nb = 0, excluded = 0;
  for (const auto& r : a) (detail::gap_features(r, c_hat, o.k, feats) ? ++na : ++excluded);
  for (const auto& r : b) (detail::gap_features(r, c_hat, o.k, feats) ? ++nb : ++excluded);
  TestReport t;
  t.name = name;
  t.criterion = "p > 0.01";
  t.excluded = excluded;
  t.sample_size = na + nb;
  if (na < 2 || nb < 2) {
    t.note = "too few usable runs";
    return t;
  }
  const std::size_t n = na + nb;
  const std::size_t k = o.k;
  std::vector<float> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = feats[i * k + c] - feats[j * k + c];
        s += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = static_cast<float>(std::sqrt(s));
    }
  }
  std::vector<std::uint8_t> group(n, 0);
  for (std::size_t i = na; i < n; ++i) group[i] = 1;
  auto energy = [&](const std::vector<std::uint8_t>& g) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* row = dist.data() + i * n;
      for (std::size_t j = i + 1; j < n; ++j) {
        const int key = g[i] + g[j];
        if (key == 1) {
          ab += row[j];
        } else if (key == 0) {
          aa += row[j];
        } else {
          bb += row[j];
        }
      }
    }
    const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
    return 2.0 * ab / (fa * fb) - 2.0 * aa / (fa * fa) - 2.0 * bb / (fb * fb);
  };
  const double observed = energy(group);
  Stream rng(o.seed, 0xE4E4);
  std::size_t exceed = 0;
  for (std::size_t p = 0; p < o.permutations; ++p) {
    std::shuffle(group.begin(), group.end(), rng);
    if (energy(group) >= observed) ++exceed;
  }
  t.statistic = observed * static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(n);
  t.p_value = (static_cast<double>(exceed) + 1.0) / (static_cast<double>(o.permutations) + 1.0);
  t.passed = t.p_value > 0.01;
  t.extra.push_back({"groups_a", static_cast<double>(na)});
  t.extra.push_back({"groups_b", static_cast<double>(nb)});
  return t;
}

/// Merged pairs (a_i, b_i) against singles.
inline TestReport superposition_test(std::span<const ThinnedRun> runs_a, std::span<const ThinnedRun> runs_b,
                                     std::span<const ThinnedRun> singles, double c_hat, const EnergyOptions& o = {}) {
  if (runs_a.size() != runs_b.size()) throw std::invalid_argument("superposition_test: unpaired runs");
  std::vector<ThinnedRun> merged;
  merged.reserve(runs_a.size());
  for (std::size_t i = 0; i < runs_a.size(); ++i) merged.push_back(merge_runs(runs_a[i], runs_b[i]));
  return energy_two_sample(merged, singles, c_hat, o, "superposition");
}

// --- Laplace functional -----------------------------------------------------

struct Step {
  double low;
  double high;
  double weight;
};

struct LaplaceOptions {
  std::size_t bootstrap = 400;
  std::uint64_t seed = 0;
  double tolerance = 0.05;
  double z_floor = 1e-300;  // runs with Z <= z_floor are excluded
};

/// Integral of (1 - e^{-phi}) sqrt2 e^{-sqrt2 x} for a step function phi.
inline double laplace_exponent_integral(std::span<const Step> phi) {
  double s = 0.0;
  for (const auto& st : phi) s += -std::expm1(-st.weight) * (std::exp(-kSqrt2 * st.low) - std::exp(-kSqrt2 * st.high));
  return s;
}

inline double phi_sum(std::span<const Step> phi, std::span<const double> points) {
  double s = 0.0;
  for (double x : points) {
    for (const auto& st : phi) {
      if (x >= st.low && x < st.high) s += st.weight;
    }
  }
  return s;
}

/// Empirical E exp(-sum phi(x_i)) against E exp(-c Z int (1 - e^{-phi}) sqrt2 e^{-sqrt2 x} dx).
inline TestReport laplace_functional_compare(std::span<const ThinnedRun> runs, std::span<const Step> phi,
                                             double c_hat, const LaplaceOptions& o = {}) {
  double support_low = std::numeric_limits<double>::infinity();
  for (const auto& st : phi) {
    if (!(st.weight >= 0.0)) throw std::invalid_argument("laplace_functional_compare: negative weight");
    if (!(st.low < st.high) || !std::isfinite(st.low) || !std::isfinite(st.high)) {
      throw std::invalid_argument("laplace_functional_compare: steps need a finite interval");
    }
    if (st.weight > 0.0) support_low = std::min(support_low, st.low);
  }
  const double integral = laplace_exponent_integral(phi);
  std::vector<double> lhs, rhs;
  std::size_t excluded = 0;
  for (const auto& r : runs) {
    if (r.floor > support_low || !(r.z > o.z_floor)) {
      ++excluded;
      continue;
    }
    lhs.push_back(std::exp(-phi_sum(phi, r.points)));
    rhs.push_back(std::exp(-c_hat * r.z * integral));
  }
  TestReport t;
  t.name = "laplace_functional";
  t.criterion = "relative difference < " + std::to_string(o.tolerance) + " and bootstrap 95% intervals overlap";
  t.excluded = excluded;
  t.sample_size = lhs.size();
  if (lhs.empty()) {
    t.note = "no usable runs";
    return t;
  }
  const double l = mean(lhs);
  const double rv = mean(rhs);
  t.statistic = std::abs(l - rv) / std::abs(rv);
  Stream rng(o.seed, 0x1A91);
  std::vector<double> bl, br;
  const std::size_t n = lhs.size();
  for (std::size_t b = 0; b < o.bootstrap; ++b) {
    CompensatedSum sl, sr;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
      sl.add(lhs[j]);
      sr.add(rhs[j]);
    }
    bl.push_back(sl.value() / static_cast<double>(n));
    br.push_back(sr.value() / static_cast<double>(n));
  }
  const double l_lo = o.bootstrap ? quantile(bl, 0.025) : l, l_hi = o.bootstrap ? quantile(bl, 0.975) : l;
  const double r_lo = o.bootstrap ? quantile(br, 0.025) : rv, r_hi = o.bootstrap ? quantile(br, 0.975) : rv;
  const bool overlap = l_lo <= r_hi && r_lo <= l_hi;
  t.passed = t.statistic < o.tolerance && overlap;
  t.extra = {{"lhs", l}, {"rhs", rv}, {"lhs_ci_low", l_lo}, {"lhs_ci_high", l_hi}, {"rhs_ci_low", r_lo}, {"rhs_ci_high", r_hi}};
  return t;
}

// --- rank gaps --------------------------------------------------------------

/// Mean over configurations of x_n - x_{n+1}, n = 1..n_max.
inline std::vector<double> rank_gap_profile(std::span<const std::vector<double>> configs, std::size_t n_max) {
  if (n_max == 0) throw std::invalid_argument("rank_gap_profile: n_max must be >= 1");
  std::vector<CompensatedSum> acc(n_max);
  for (const auto& c : configs) {
    if (c.size() < n_max + 1) throw std::invalid_argument("rank_gap_profile: insufficient points");
    for (std::size_t n = 0; n < n_max; ++n) acc[n].add(c[n] - c[n + 1]);
  }
  std::vector<double> out(n_max);
  for (std::size_t n = 0; n < n_max; ++n) out[n] = configs.empty() ? 0.0 : acc[n].value() / static_cast<double>(configs.size());
  return out;
}

/// Positive control: each run replaced by a direct PPP draw with its lambda.
inline std::vector<ThinnedRun> ppp_control_runs(std::span<const ThinnedRun> runs, double c_hat, double floor,
                                                std::uint64_t seed) {
  std::vector<ThinnedRun> out;
  out.reserve(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ThinnedRun p;
    p.z = runs[i].z;
    p.floor = floor;
    if (runs[i].z > 0.0) p.points = sample_exponential_ppp(c_hat * runs[i].z, floor, derive_key(seed, i)).points;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace bbmlab

#endif  // BBMLAB_STATS_HPP_
