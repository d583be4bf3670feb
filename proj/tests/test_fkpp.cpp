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


#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "bbmlab/fkpp.hpp"

namespace bbmlab {
namespace {

const double kRoot2 = std::sqrt(2.0);
const OffspringLaw kBinary = OffspringLaw::binary();

TEST(Evolve, FixedPoints) {
  for (double c : {0.0, 1.0}) {
    const auto p = make_profile(-5.0, 5.0, 0.1, [&](double) { return c; });
    const auto q = evolve(p, kBinary, 0.004, 500);
    EXPECT_EQ(q.values, p.values);
    EXPECT_NEAR(q.time, 2.0, 1e-12);
  }
  const OffspringLaw ternary({0.25, 0.5, 0.25});
  const auto one = make_profile(-5.0, 5.0, 0.1, [](double) { return 1.0; });
  EXPECT_EQ(evolve(one, ternary, 0.004, 100).values, one.values);
}

TEST(Evolve, RejectsUnstableStep) {
  const auto p = heaviside_profile(-5.0, 5.0, 0.1);
  EXPECT_THROW(evolve(p, kBinary, 0.011, 1), std::invalid_argument);
  EXPECT_THROW(evolve(p, kBinary, 0.0, 1), std::invalid_argument);
  EXPECT_NO_THROW(evolve(p, kBinary, 0.01, 1));
}

TEST(Evolve, StaysInUnitInterval) {
  const auto p = evolve(heaviside_profile(-20.0, 20.0, 0.1), kBinary, 0.004, 2000);
  for (double v : p.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_TRUE(std::is_sorted(p.values.begin(), p.values.end()));
}

TEST(Evolve, ComparisonPrinciple) {
  const auto lo = heaviside_profile(-20.0, 20.0, 0.1, 1.0);
  const auto hi = make_profile(-20.0, 20.0, 0.1, [](double x) { return x >= 0.0 ? 1.0 : 0.5 * std::exp(x); });
  for (std::size_t j = 0; j < lo.size(); ++j) ASSERT_LE(lo.values[j], hi.values[j]);
  const auto a = evolve(lo, kBinary, 0.004, 1500);
  const auto b = evolve(hi, kBinary, 0.004, 1500);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_LE(a.values[j], b.values[j]);
}

// Mean of the maximum read off u(t, .) = P[max <= .]: the integral of 1 - u
// right of 0 minus the integral of u left of 0.
double mean_of_max(const WaveProfile& p) {
  double m = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double x = p.x(j);
    m += x >= 0.0 ? 1.0 - p.values[j] : -p.values[j];
  }
  return m * p.dx;
}

TEST(Evolve, HeavisideMassMovesRight) {
  // Pointwise monotonicity in t fails left of 0, where u starts at 0 and
  // becomes positive before the front passes. The mass version holds: the
  // mean maximum is superadditive in t, hence nondecreasing.
  auto p = heaviside_profile(-30.0, 60.0, 0.1);
  double prev = mean_of_max(p);
  for (int k = 0; k < 20; ++k) {
    p = evolve(p, kBinary, 0.004, 250);
    const double m = mean_of_max(p);
    EXPECT_GT(m, prev);
    prev = m;
  }
  // After t = 20 the mean maximum is near the front.
  EXPECT_NEAR(prev, front_position(p), 1.0);
}

TEST(Evolve, HeavisideSolutionFallsRightOfTheStep) {
  auto p = heaviside_profile(-20.0, 40.0, 0.1);
  for (int k = 0; k < 20; ++k) {
    const auto q = evolve(p, kBinary, 0.004, 250);
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p.x(j) >= 0.0) ASSERT_LE(q.values[j], p.values[j]) << "x = " << p.x(j);
    }
    p = q;
  }
}

TEST(Evolve, HeatEquationLimit) {
  // With p_1 = 1 the reaction vanishes and the step diffuses as the normal cdf.
  const auto law = OffspringLaw::with_any_mean({1.0});
  const double dx = 0.05, dt = 0.4 * dx * dx;
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
  const auto p = evolve(heaviside_profile(-10.0, 10.0, dx), law, dt, steps);
  for (std::size_t j = 0; j < p.size(); j += 20) {
    // The discrete step sits half a cell to the left of 0.
    const double exact = 1.0 - normal_sf((p.x(j) + 0.5 * dx) / std::sqrt(p.time));
    EXPECT_NEAR(p.values[j], exact, 2e-3);
  }
}

TEST(FrontPosition, ExactStep) {
  const double dx = 0.1;
  const auto p = heaviside_profile(-5.0, 5.0, dx, 1.3);
  EXPECT_NEAR(front_position(p), 1.3, 0.5 * dx + 1e-12);
}

TEST(FrontPosition, LogisticMidpoint) {
  const double dx = 0.1, mid = 0.37;
  const auto p = make_profile(-10.0, 10.0, dx, [&](double x) { return 1.0 / (1.0 + std::exp(-(x - mid))); });
  EXPECT_NEAR(front_position(p), mid, dx);
  EXPECT_NEAR(front_position(recentered(p)), 0.0, 1e-12);
}

TEST(FrontPosition, NoCrossing) {
  const auto p = make_profile(-1.0, 1.0, 0.1, [](double) { return 0.2; });
  EXPECT_THROW(front_position(p), std::domain_error);
  EXPECT_THROW(front_position(p, 1.0), std::invalid_argument);
}

TEST(TrackFront, SpeedAndMeshConvergence) {
  FrontTrackOptions coarse, fine;
  coarse.dx = 0.1;
  fine.dx = 0.05;
  const auto a = fit_front(track_front(kBinary, 100.0, coarse), 20.0, 100.0);
  const auto b = fit_front(track_front(kBinary, 100.0, fine), 20.0, 100.0);
  EXPECT_NEAR(b.speed, kRoot2, 0.01 * kRoot2);
  // Refinement moves the fitted speed toward sqrt2 and changes it by < 0.5%.
  EXPECT_LT(std::abs(b.speed - kRoot2), std::abs(a.speed - kRoot2));
  EXPECT_LT(std::abs(a.speed - b.speed) / b.speed, 0.005);
}

TEST(FitFront, RecoversSyntheticCurve) {
  FrontTrack tr;
  for (double t = 1.0; t <= 200.0; t += 1.0) {
    tr.times.push_back(t);
    tr.fronts.push_back(kRoot2 * t - 1.06 * std::log(t) + 0.3);
  }
  const auto f = fit_front(tr);
  EXPECT_NEAR(f.speed, kRoot2, 1e-9);
  EXPECT_NEAR(f.log_coef_free, 1.06, 1e-8);
  EXPECT_NEAR(f.log_coef, 1.06, 1e-9);
  EXPECT_NEAR(f.intercept, 0.3, 1e-8);
  EXPECT_EQ(f.points, 181u);
  EXPECT_THROW(fit_front(tr, 500.0, 600.0), std::invalid_argument);
}

TEST(Wave, ConvergedShape) {
  const auto w = compute_wave(kBinary);
  EXPECT_TRUE(w.converged);
  EXPECT_TRUE(std::is_sorted(w.values.begin(), w.values.end()));
  const auto j0 = static_cast<std::size_t>(std::llround(-w.x_min / w.dx));
  EXPECT_NEAR(w.values[j0], 0.5, 1e-9);
  EXPECT_EQ(w.values.front() < 1e-10, true);
  EXPECT_EQ(w.values.back(), 1.0);
}

TEST(Wave, ResidualSmallAndDecreasing) {
  double prev = 1.0;
  for (double dx : {0.1, 0.05, 0.025}) {
    WaveOptions o;
    o.dx = dx;
    const double r = wave_residual(compute_wave(kBinary, o), kBinary);
    EXPECT_LT(r, 1e-2);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Wave, ResidualOfConstantsIsZero) {
  for (double c : {0.0, 1.0}) {
    auto p = make_profile(-5.0, 5.0, 0.1, [&](double) { return c; });
    p.converged = true;
    EXPECT_EQ(wave_residual(p, kBinary), 0.0);
  }
}

TEST(Wave, HeavisideResidualIsLarge) {
  const double dx = 0.05;
  const auto p = heaviside_profile(-5.0, 5.0, dx);
  EXPECT_THROW(wave_residual(p, kBinary), NotConvergedError);
  EXPECT_GT(wave_residual(p, kBinary, kRoot2, false), 0.25 / (dx * dx));
}

TEST(Wave, GeneralLawResidual) {
  const OffspringLaw law({0.25, 0.5, 0.25});
  const auto w = compute_wave(law);
  EXPECT_LT(wave_residual(w, law), 1e-2);
}

TEST(Wave, MatchesRecenteredPdeSolution) {
  FrontTrackOptions o;
  o.dx = 0.1;
  const auto tr = track_front(kBinary, 150.0, o);
  const auto pde = recentered(tr.final_profile);
  WaveOptions wo;
  wo.dx = 0.1;
  const auto w = compute_wave(kBinary, wo);
  double sup = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double x = w.x(j);
    const double pos = (x - pde.x_min) / pde.dx;
    const auto k = static_cast<std::size_t>(pos);
    if (pos < 0 || k + 1 >= pde.size()) continue;
    const double f = pos - static_cast<double>(k);
    sup = std::max(sup, std::abs((1 - f) * pde.values[k] + f * pde.values[k + 1] - w.values[j]));
  }
  EXPECT_LT(sup, 1e-2);
}

TEST(TailFit, SyntheticConstantOne) {
  auto p = make_profile(0.0, 30.0, 0.05, [](double x) { return x < 1.0 ? 0.5 : 1.0 - x * std::exp(-kRoot2 * x); });
  p.converged = true;
  const auto c = tail_fit(p);
  EXPECT_EQ(c.method, "fkpp-tail");
  EXPECT_NEAR(c.value, 1.0, 1e-10);
  EXPECT_GT(c.window_high, c.window_low);
}

TEST(TailFit, ExtentDoublingStable) {
  WaveOptions a, b;
  a.dx = b.dx = 0.1;
  b.x_min = 2.0 * a.x_min;
  b.x_max = 2.0 * a.x_max;
  const double ca = tail_fit(compute_wave(kBinary, a)).value;
  const double cb = tail_fit(compute_wave(kBinary, b)).value;
  EXPECT_LT(std::abs(ca - cb) / ca, 0.1);
}

TEST(TailFit, Errors) {
  auto p = make_profile(0.0, 3.0, 0.1, [](double) { return 0.5; });
  EXPECT_THROW(tail_fit(p), NotConvergedError);
  p.converged = true;
  EXPECT_THROW(tail_fit(p), std::domain_error);
}

}  // namespace
}  // namespace bbmlab
