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

// Finite differences for u_t = u_xx / 2 + g(u) - u, with g the offspring
// generating function. u(t, .) is the distribution function of the maximum
// at time t when started from the unit step at 0.
//
// The traveling wave is obtained from the same spatial discretization by
// shooting: at speed sqrt2 the discrete ODE is integrated left to right from
// the decaying mode near 0, and the free amplitude is bisected until the
// profile passes 1/2 at x = 0.

#ifndef BBMLAB_FKPP_HPP_
#define BBMLAB_FKPP_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/error.hpp"
#include "bbmlab/numeric.hpp"
#include "bbmlab/stats.hpp"

namespace bbmlab {

struct WaveProfile {
  double x_min = 0.0;
  double dx = 0.1;
  std::vector<double> values;
  double time = 0.0;
  double shift = 0.0;  // x_min was moved by this much when recentering
  bool converged = false;

  std::size_t size() const noexcept { return values.size(); }
  double x(std::size_t j) const noexcept { return x_min + static_cast<double>(j) * dx; }
  double x_max() const noexcept { return x(values.size() - 1); }
};

template <typename F>
WaveProfile make_profile(double x_min, double x_max, double dx, F&& f) {
  if (!(dx > 0.0) || !(x_max > x_min)) throw std::invalid_argument("make_profile: bad grid");
  WaveProfile p;
  p.x_min = x_min;
  p.dx = dx;
  const auto n = static_cast<std::size_t>(std::llround((x_max - x_min) / dx)) + 1;
  p.values.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.values[j] = f(p.x(j));
  return p;
}

/// 1 for x >= at, 0 otherwise.
inline WaveProfile heaviside_profile(double x_min, double x_max, double dx, double at = 0.0) {
  return make_profile(x_min, x_max, dx, [&](double x) { return x >= at - 1e-12 * dx ? 1.0 : 0.0; });
}

inline constexpr double kFlushToZero = 1e-300;

/// Explicit Euler steps; the end values act as Dirichlet data. Points whose
/// whole stencil sits at exactly 0 or exactly 1 are fixed points and skipped.
inline WaveProfile evolve(WaveProfile p, const OffspringLaw& law, double dt, std::size_t steps) {
  if (!(dt > 0.0) || dt > p.dx * p.dx * (1.0 + 1e-12)) {
    throw std::invalid_argument("evolve: explicit scheme needs 0 < dt <= dx^2");
  }
  const std::size_t n = p.values.size();
  if (n < 3) throw std::invalid_argument("evolve: grid too small");
  const double a = 0.5 * dt / (p.dx * p.dx);
  std::vector<double> next(p.values);
  auto& u = p.values;
  // Everything left of lo is exactly 0 and everything right of hi exactly 1.
  const auto sn = static_cast<std::ptrdiff_t>(n);
  auto first_nonzero = [&](std::ptrdiff_t from, std::ptrdiff_t to) {
    for (std::ptrdiff_t j = from; j <= to; ++j) {
      if (u[static_cast<std::size_t>(j)] != 0.0) return j;
    }
    return to + 1;
  };
  auto last_non_one = [&](std::ptrdiff_t from, std::ptrdiff_t to) {
    for (std::ptrdiff_t j = to; j >= from; --j) {
      if (u[static_cast<std::size_t>(j)] != 1.0) return j;
    }
    return from - 1;
  };
  std::ptrdiff_t lo = first_nonzero(0, sn - 1);
  std::ptrdiff_t hi = last_non_one(0, sn - 1);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::ptrdiff_t b0 = std::max<std::ptrdiff_t>(1, lo - 1);
    const std::ptrdiff_t b1 = std::min<std::ptrdiff_t>(sn - 2, hi + 1);
    if (b0 > b1) break;
    for (std::ptrdiff_t sj = b0; sj <= b1; ++sj) {
      const auto j = static_cast<std::size_t>(sj);
      const double v = u[j];
      double w = v + a * (u[j + 1] - 2.0 * v + u[j - 1]) + dt * (law.generating(v) - v);
      if (w < kFlushToZero) w = 0.0;
      if (w > 1.0) w = 1.0;
      next[j] = w;
    }
    for (std::ptrdiff_t j = b0; j <= b1; ++j) u[static_cast<std::size_t>(j)] = next[static_cast<std::size_t>(j)];
    const std::ptrdiff_t lo_new = first_nonzero(std::max<std::ptrdiff_t>(0, b0 - 1), std::min(sn - 1, b1 + 1));
    const std::ptrdiff_t hi_new = last_non_one(std::max<std::ptrdiff_t>(0, b0 - 1), std::min(sn - 1, b1 + 1));
    lo = lo_new > b1 + 1 ? std::max(lo, lo_new) : lo_new;
    hi = hi_new < b0 - 1 ? std::min(hi, hi_new) : hi_new;
  }
  p.time += static_cast<double>(steps) * dt;
  p.converged = false;
  return p;
}

/// Leftmost crossing of `level`, linearly interpolated between grid points.
inline double front_position(const WaveProfile& p, double level = 0.5) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("front_position: level must be in (0,1)");
  for (std::size_t j = 0; j < p.values.size(); ++j) {
    if (p.values[j] >= level) {
      if (j == 0) break;
      const double a = p.values[j - 1];
      const double b = p.values[j];
      return p.x(j - 1) + (level - a) / (b - a) * p.dx;
    }
  }
  throw std::domain_error("front_position: profile does not cross the level");
}

/// Moves the grid so the level-1/2 crossing sits at 0.
inline WaveProfile recentered(WaveProfile p, double level = 0.5) {
  const double f = front_position(p, level);
  p.x_min -= f;
  p.shift += f;
  return p;
}

// --- front tracking ---------------------------------------------------------

struct FrontTrack {
  std::vector<double> times;
  std::vector<double> fronts;
  double dx = 0.0;
  double dt = 0.0;
  WaveProfile final_profile;
};

struct FrontTrackOptions {
  double dx = 0.05;
  double dt_ratio = 0.4;  // dt = dt_ratio dx^2
  double x_left = -50.0;
  double right_pad = 100.0;
  double record_every = 1.0;
};

/// Solves from the unit step on [x_left, sqrt2 T + right_pad] and records the
/// 1/2 crossing every `record_every` time units.
inline FrontTrack track_front(const OffspringLaw& law, double final_time, const FrontTrackOptions& o = {}) {
  if (!(final_time > 0.0)) throw std::invalid_argument("track_front: final time must be > 0");
  FrontTrack tr;
  tr.dx = o.dx;
  tr.dt = o.dt_ratio * o.dx * o.dx;
  const double x_right = kSqrt2 * final_time + o.right_pad;
  WaveProfile p = heaviside_profile(o.x_left, x_right, o.dx);
  const auto per_record = static_cast<std::size_t>(std::llround(o.record_every / tr.dt));
  const auto records = static_cast<std::size_t>(std::llround(final_time / o.record_every));
  for (std::size_t r = 1; r <= records; ++r) {
    p = evolve(std::move(p), law, tr.dt, per_record);
    tr.times.push_back(static_cast<double>(r) * static_cast<double>(per_record) * tr.dt);
    tr.fronts.push_back(front_position(p));
  }
  tr.final_profile = std::move(p);
  return tr;
}

struct FrontFit {
  double speed = 0.0;          // free fit v t - c ln t + b
  double log_coef_free = 0.0;  // c from the free fit
  double log_coef = 0.0;       // c with the speed held at sqrt2
  double intercept = 0.0;      // b with the speed held at sqrt2
  double t_low = 0.0;
  double t_high = 0.0;
  std::size_t points = 0;
};

inline FrontFit fit_front(const FrontTrack& tr, double t_low = 20.0, double t_high = 200.0) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    if (tr.times[i] >= t_low - 1e-9 && tr.times[i] <= t_high + 1e-9) idx.push_back(i);
  }
  if (idx.size() < 4) throw std::invalid_argument("fit_front: too few samples in the fit range");
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd a(m, 3);
  Eigen::VectorXd y(m), yc(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double t = tr.times[idx[static_cast<std::size_t>(r)]];
    const double f = tr.fronts[idx[static_cast<std::size_t>(r)]];
    a(r, 0) = t;
    a(r, 1) = -std::log(t);
    a(r, 2) = 1.0;
    y(r) = f;
    yc(r) = f - kSqrt2 * t;
  }
  FrontFit out;
  const Eigen::Vector3d free = a.colPivHouseholderQr().solve(y);
  out.speed = free(0);
  out.log_coef_free = free(1);
  const Eigen::Vector2d cons = a.rightCols(2).colPivHouseholderQr().solve(yc);
  out.log_coef = cons(0);
  out.intercept = cons(1);
  out.t_low = t_low;
  out.t_high = t_high;
  out.points = idx.size();
  return out;
}

// --- traveling wave ---------------------------------------------------------

struct WaveOptions {
  double dx = 0.05;
  double x_min = -40.0;
  double x_max = 60.0;
  double speed = kSqrt2;
  int max_iterations = 400;
  double tolerance = 1e-6;  // sup-norm change between successive iterates
};

namespace detail {

// One left-to-right pass of the discrete wave ODE from amplitude delta at the
// left end; stops after index `last`.
inline void shoot_wave(std::vector<double>& w, double log_delta, double dx, double speed, const OffspringLaw& law,
                       std::size_t last) {
  const double h = dx;
  const double cm = 0.5 / (h * h) - speed / (2.0 * h);  // coefficient of w_{j-1}
  const double c0 = -1.0 / (h * h);                     // of w_j (diffusion only)
  const double cp = 0.5 / (h * h) + speed / (2.0 * h);  // of w_{j+1}
  // Growing root rho of the linearization at 0: cp rho^2 + (c0 + g'(0) - 1) rho + cm = 0.
  const double lin = c0 + law.p(1) - 1.0;
  const double disc = lin * lin - 4.0 * cp * cm;
  const double rho = (-lin + std::sqrt(std::max(0.0, disc))) / (2.0 * cp);
  w[0] = std::exp(log_delta);
  w[1] = w[0] * rho;
  for (std::size_t j = 1; j < last; ++j) {
    const double v = w[j];
    double nxt = -(cm * w[j - 1] + c0 * v + law.generating(v) - v) / cp;
    if (!std::isfinite(nxt) || nxt > 4.0) nxt = 4.0;
    if (nxt < -1.0) nxt = -1.0;
    w[j + 1] = nxt;
  }
}

}  // namespace detail

/// Discrete traveling wave at the given speed with omega(0) = 1/2.
inline WaveProfile compute_wave(const OffspringLaw& law, const WaveOptions& o = {}) {
  if (!(o.dx > 0.0) || !(o.x_min < 0.0) || !(o.x_max > 0.0)) throw std::invalid_argument("compute_wave: bad grid");
  const auto j0 = static_cast<std::size_t>(std::llround(-o.x_min / o.dx));
  const auto n = j0 + static_cast<std::size_t>(std::llround(o.x_max / o.dx)) + 1;
  WaveProfile p;
  p.dx = o.dx;
  p.x_min = -static_cast<double>(j0) * o.dx;
  p.values.assign(n, 0.0);
  std::vector<double> prev;
  // omega(0) increases with the amplitude; bisect its logarithm.
  double lo = -745.0, hi = 0.0;
  bool done = false;
  for (int it = 0; it < o.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    detail::shoot_wave(p.values, mid, o.dx, o.speed, law, n - 1);
    const double at0 = p.values[j0];
    if (at0 > 0.5) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (!prev.empty()) {
      double diff = 0.0;
      for (std::size_t j = 0; j <= j0; ++j) diff = std::max(diff, std::abs(p.values[j] - prev[j]));
      if (diff < o.tolerance && std::abs(at0 - 0.5) < 1e-12) {
        done = true;
        break;
      }
    }
    prev = p.values;
    if (hi - lo < 1e-15) {
      done = std::abs(at0 - 0.5) < 1e-9;
      break;
    }
  }
  if (!done) throw NotConvergedError("compute_wave: bisection did not converge");
  for (auto& v : p.values) v = std::clamp(v, 0.0, 1.0);
  // Right of the midpoint the shot is trusted until it reaches 1 or stops
  // rising; there it must already sit at 1 up to rounding, and is held at 1.
  for (std::size_t j = j0 + 1; j < n; ++j) {
    if (p.values[j] >= 1.0 || p.values[j] < p.values[j - 1]) {
      if (1.0 - p.values[j - 1] > 1e-9) throw NotConvergedError("compute_wave: shot left the wave before reaching 1");
      std::fill(p.values.begin() + static_cast<std::ptrdiff_t>(j), p.values.end(), 1.0);
      break;
    }
  }
  p.converged = true;
  return p;
}

/// sup over the interior of |w''/2 + speed w' + g(w) - w|, with fourth-order
/// differences. Non-converged profiles are rejected unless `require_converged`
/// is false.
inline double wave_residual(const WaveProfile& p, const OffspringLaw& law, double speed = kSqrt2,
                            bool require_converged = true) {
  if (require_converged && !p.converged) throw NotConvergedError("wave_residual: profile has not converged");
  const std::size_t n = p.values.size();
  if (n < 5) throw std::invalid_argument("wave_residual: grid too small");
  const auto& w = p.values;
  const double h = p.dx;
  double sup = 0.0;
  for (std::size_t j = 2; j + 2 < n; ++j) {
    const double d2 = (-w[j + 2] + 16.0 * w[j + 1] - 30.0 * w[j] + 16.0 * w[j - 1] - w[j - 2]) / (12.0 * h * h);
    const double d1 = (-w[j + 2] + 8.0 * w[j + 1] - 8.0 * w[j - 1] + w[j - 2]) / (12.0 * h);
    sup = std::max(sup, std::abs(0.5 * d2 + speed * d1 + law.generating(w[j]) - w[j]));
  }
  return sup;
}

struct WaveTailOptions {
  double anchor = 0.0;  // the wave is used as omega(x - anchor)
  double tail_low = 1e-8;
  double tail_high = 1e-2;
};

/// Fits log(1 - omega(x - anchor)) against log x - sqrt2 x + log C over the
/// points where 1e-8 < 1 - omega < 1e-2.
inline EstimatedConstant tail_fit(const WaveProfile& p, const WaveTailOptions& o = {}) {
  if (!p.converged) throw NotConvergedError("tail_fit: profile has not converged");
  std::vector<double> logs;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  for (std::size_t j = 0; j < p.values.size(); ++j) {
    const double tail = 1.0 - p.values[j];
    const double x = p.x(j) + o.anchor;
    if (tail > o.tail_low && tail < o.tail_high && x > 0.0) {
      logs.push_back(std::log(tail) - std::log(x) + kSqrt2 * x);
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
    }
  }
  if (logs.size() < 2) throw std::domain_error("tail_fit: tail below numeric floor or window empty");
  EstimatedConstant c;
  c.method = "fkpp-tail";
  const double m = mean(logs);
  c.value = std::exp(m);
  c.stderr_ = c.value * std::sqrt(variance(logs) / static_cast<double>(logs.size()));
  c.window_low = x_lo;
  c.window_high = x_hi;
  return c;
}

}  // namespace bbmlab

#endif  // BBMLAB_FKPP_HPP_
