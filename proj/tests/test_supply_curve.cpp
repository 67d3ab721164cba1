#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "mpa/supply_curve.hpp"

using namespace mpa;

namespace {

// Exhaustive oracle for contiguous bivariate clustering with k breakpoints.
double exhaustive_sse(const std::vector<double>& x, const std::vector<double>& y,
                      size_t k) {
  supply_detail::BivariatePrefix pre(x, y);
  const size_t n = x.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<size_t> bp(k);
  // iterate all increasing k-tuples of interior positions
  std::function<void(size_t, size_t, double)> rec = [&](size_t depth, size_t start,
                                                        double acc) {
    if (depth == k) {
      const size_t lo = k == 0 ? 0 : bp[k - 1];
      best = std::min(best, acc + pre.sse(lo, n));
      return;
    }
    for (size_t i = start; i < n; ++i) {
      const size_t lo = depth == 0 ? 0 : bp[depth - 1];
      bp[depth] = i;
      rec(depth + 1, i + 1, acc + pre.sse(lo, i));
    }
  };
  rec(0, 1, 0.0);
  return best;
}

double dp_sse_at_k(const std::vector<double>& x, const std::vector<double>& y,
                   size_t k) {
  // force exactly k breakpoints by demanding an unreachable variance target
  auto seg = segment_regimes(x, y, k, 1.0);
  if (seg.breakpoints.size() != k) return -1;
  supply_detail::BivariatePrefix pre(x, y);
  double sse = 0;
  size_t lo = 0;
  for (size_t r = 0; r <= seg.breakpoints.size(); ++r) {
    const size_t hi = r < seg.breakpoints.size() ? seg.breakpoints[r] : x.size();
    sse += pre.sse(lo, hi);
    lo = hi;
  }
  return sse;
}

}  // namespace

TEST_CASE("carbon_adjust") {
  CHECK(carbon_adjust(30, 0.202, 80) == Catch::Approx(46.16));
  CHECK(carbon_adjust(30, 0.202, 0) == Catch::Approx(30));
  CHECK(carbon_adjust(0, 0.340, 100) == Catch::Approx(34));
  CHECK_THROWS_AS(carbon_adjust(30, -0.1, 80), DomainError);
}

TEST_CASE("constant series needs no breakpoints, EV = 1") {
  std::vector<double> x(40, 10.0), y(40, 20.0);
  auto seg = segment_regimes(x, y, 11, 0.95);
  CHECK(seg.breakpoints.empty());
  CHECK(seg.explained_variance == 1.0);
  CHECK(seg.centroids.size() == 1);
}

TEST_CASE("noiseless step series -> single breakpoint at the step") {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) { x.push_back(10); y.push_back(10); }
  for (int i = 0; i < 50; ++i) { x.push_back(60); y.push_back(60); }
  auto seg = segment_regimes(x, y, 11, 0.95);
  REQUIRE(seg.breakpoints.size() == 1);
  CHECK(seg.breakpoints[0] == 50);
  CHECK(seg.explained_variance == Catch::Approx(1.0));
  CHECK(seg.centroids[0].first == Catch::Approx(10));
  CHECK(seg.centroids[1].first == Catch::Approx(60));
  CHECK(seg.regime_of(49) == 0);
  CHECK(seg.regime_of(50) == 1);
}

TEST_CASE("three planted plateaus -> two breakpoints at the planted positions") {
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) { x.push_back(10); y.push_back(12); }
  for (int i = 0; i < 25; ++i) { x.push_back(40); y.push_back(35); }
  for (int i = 0; i < 35; ++i) { x.push_back(90); y.push_back(80); }
  auto seg = segment_regimes(x, y, 11, 0.95);
  REQUIRE(seg.breakpoints.size() == 2);
  CHECK(seg.breakpoints[0] == 30);
  CHECK(seg.breakpoints[1] == 55);
}

TEST_CASE("DP optimality against exhaustive enumeration") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> noise(0, 5);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<double> x, y;
    const size_t n = 40 + trial * 4;
    for (size_t i = 0; i < n; ++i) {
      const double level = 10 + 30 * (i * 3 / n);
      x.push_back(level + noise(rng));
      y.push_back(level * 0.8 + noise(rng));
    }
    for (size_t k = 1; k <= 3; ++k) {
      const double dp = dp_sse_at_k(x, y, k);
      const double ex = exhaustive_sse(x, y, k);
      REQUIRE(dp == Catch::Approx(ex).margin(1e-6));
    }
  }
}

TEST_CASE("SSE is nonincreasing in breakpoint count") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0, 10);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x, y;
    for (size_t i = 0; i < 60; ++i) {
      x.push_back(noise(rng));
      y.push_back(noise(rng));
    }
    double prev = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k <= 6; ++k) {
      const double s = dp_sse_at_k(x, y, k);
      CHECK(s <= prev + 1e-9);
      prev = s;
    }
  }
}

TEST_CASE("exactly linear data recovers slope and intercept with one segment") {
  std::vector<double> l, p;
  for (int i = 0; i < 200; ++i) {
    l.push_back(20000 + i * 100.0);
    p.push_back(0.01 * l.back() + 5.0);
  }
  auto fit = fit_piecewise(p, l, 6);
  REQUIRE(fit.slopes.size() == 1);
  CHECK(fit.slopes[0] == Catch::Approx(0.01).margin(1e-9));
  CHECK(fit.evaluate(0.0) == Catch::Approx(5.0).margin(1e-6));
}

TEST_CASE("planted two-segment curve is recovered") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, 1);
  std::uniform_real_distribution<double> ul(20000, 60000);
  std::vector<double> l, p;
  for (int i = 0; i < 2000; ++i) {
    const double x = ul(rng);
    const double base =
        x < 40000 ? 0.002 * x : 0.002 * 40000 + 0.03 * (x - 40000);
    l.push_back(x);
    p.push_back(base + noise(rng));
  }
  auto fit = fit_piecewise(p, l, 6);
  REQUIRE(fit.slopes.size() >= 2);
  // locate the knot nearest the planted one
  double best_knot = 1e18;
  for (double k : fit.knots)
    if (std::fabs(k - 40000) < std::fabs(best_knot - 40000)) best_knot = k;
  CHECK(std::fabs(best_knot - 40000) < 500);
  CHECK(slope_at(fit, 25000) == Catch::Approx(0.002).epsilon(0.10));
  CHECK(slope_at(fit, 55000) == Catch::Approx(0.03).epsilon(0.10));
}

TEST_CASE("strictly decreasing data clamps every slope to zero") {
  std::vector<double> l, p;
  for (int i = 0; i < 100; ++i) {
    l.push_back(1000.0 * i);
    p.push_back(500.0 - i);
  }
  auto fit = fit_piecewise(p, l, 4);
  for (double s : fit.slopes) CHECK(s >= 0.0);
  for (double s : fit.slopes) CHECK(s == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("fitted function is continuous at knots") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0, 2);
  std::vector<double> l, p;
  for (int i = 0; i < 600; ++i) {
    const double x = 100.0 * i;
    l.push_back(x);
    p.push_back(0.001 * x + (x > 30000 ? 0.01 * (x - 30000) : 0) + noise(rng));
  }
  auto fit = fit_piecewise(p, l, 5);
  for (double k : fit.knots) {
    const double lo = fit.evaluate(k - 1e-9);
    const double hi = fit.evaluate(k + 1e-9);
    CHECK(std::fabs(hi - lo) < 1e-6);
  }
}

TEST_CASE("slope_at tie-break and extrapolation") {
  PiecewiseSupplyFit fit;
  fit.left_edge = 0;
  fit.intercept = 0;
  fit.knots = {100};
  fit.slopes = {0.01, 0.05};
  CHECK(slope_at(fit, 50) == 0.01);
  CHECK(slope_at(fit, 150) == 0.05);
  CHECK(slope_at(fit, 100) == 0.05);  // at the knot: upper segment
  CHECK(slope_at(fit, -10) == 0.01);
  CHECK(slope_at(fit, 1e9) == 0.05);
}

TEST_CASE("too-short inputs are rejected") {
  std::vector<double> x(5, 1.0), y(5, 1.0);
  CHECK_THROWS_AS(fit_piecewise(y, x, 6), InfeasibleError);
  std::vector<double> one(1, 1.0);
  CHECK_THROWS_AS(segment_regimes(one, one, 2, 0.95), InfeasibleError);
}
