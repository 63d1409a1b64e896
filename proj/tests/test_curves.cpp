#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmm/curves.hpp"
#include "mmm/errors.hpp"
#include "mmm/rng.hpp"

using mmm::CurveData;
using mmm::CurvePoint;
using mmm::FittedCurve;

namespace {

double hill_response(double x, double m, double a, double g) {
  if (x <= 0.0) return 0.0;
  return m * std::pow(x, a) / (std::pow(x, a) + std::pow(g, a));
}

CurveData log_spaced_curve(double m, double a, double g, int points, double x_lo, double x_hi) {
  CurveData data;
  for (int i = 0; i < points; ++i) {
    const double x = x_lo * std::pow(x_hi / x_lo, static_cast<double>(i) / (points - 1));
    data.points.push_back({x, hill_response(x, m, a, g)});
  }
  return data;
}

}  // namespace

TEST_SUITE_BEGIN("curves");

TEST_CASE("noiseless parameters come back almost exactly") {
  const CurveData data = log_spaced_curve(100.0, 2.5, 1000.0, 20, 10.0, 1e5);
  const FittedCurve fit = mmm::fit_curve(data);
  CHECK(std::abs(fit.slope - 2.5) < 1e-3);
  CHECK(std::abs(fit.saturation - 1000.0) / 1000.0 < 1e-2);
  CHECK(fit.ceiling == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit.converged);
}

TEST_CASE("noisy recovery stays within tolerance in the median") {
  std::vector<double> slope_err, sat_err;
  for (int seed = 0; seed < 20; ++seed) {
    mmm::Rng rng(seed);
    CurveData data = log_spaced_curve(100.0, 2.5, 1000.0, 20, 10.0, 1e5);
    for (CurvePoint& p : data.points) p.y *= 1.0 + 0.05 * rng.normal();
    const FittedCurve fit = mmm::fit_curve(data);
    slope_err.push_back(std::abs(fit.slope - 2.5) / 2.5);
    sat_err.push_back(std::abs(fit.saturation - 1000.0) / 1000.0);
  }
  std::sort(slope_err.begin(), slope_err.end());
  std::sort(sat_err.begin(), sat_err.end());
  CHECK(0.5 * (slope_err[9] + slope_err[10]) < 0.10);
  CHECK(0.5 * (sat_err[9] + sat_err[10]) < 0.15);
}

TEST_CASE("identical responses are degenerate") {
  CurveData data;
  for (int i = 0; i < 10; ++i) data.points.push_back({static_cast<double>(i), 0.0});
  try {
    mmm::fit_curve(data);
    FAIL("expected degenerate data");
  } catch (const mmm::Error& e) {
    CHECK(e.code() == mmm::ErrorCode::degenerate);
  }
}

TEST_CASE("too few points are rejected") {
  CurveData data;
  for (int i = 0; i < 5; ++i) data.points.push_back({static_cast<double>(i), i * 2.0});
  CHECK_THROWS_AS(mmm::fit_curve(data), mmm::Error);
}

TEST_CASE("slope never drops below two even when the data is shallow") {
  // Generated with a = 1 (gentle, concave everywhere): the constraint binds.
  const CurveData data = log_spaced_curve(50.0, 1.0, 100.0, 24, 1.0, 1e4);
  const FittedCurve fit = mmm::fit_curve(data);
  CHECK(fit.slope >= 2.0);
}

TEST_CASE("saturation point is (g, M/2)") {
  FittedCurve curve;
  curve.slope = 2.5;
  curve.saturation = 1000.0;
  curve.ceiling = 100.0;
  const auto [x, y] = mmm::saturation_point(curve);
  CHECK(x == 1000.0);
  CHECK(y == 50.0);

  curve.saturation = 0.5;
  curve.ceiling = 1.0;
  const auto [x2, y2] = mmm::saturation_point(curve);
  CHECK(x2 == 0.5);
  CHECK(y2 == 0.5);
}

TEST_CASE("fitted model evaluated at g returns half the ceiling") {
  const CurveData data = log_spaced_curve(80.0, 3.0, 500.0, 16, 5.0, 5e3);
  const FittedCurve fit = mmm::fit_curve(data);
  const auto points = mmm::curve_points(fit, {fit.saturation});
  CHECK(points[0].y == doctest::Approx(fit.ceiling / 2.0).epsilon(1e-10));
}

TEST_CASE("curve points cover the documented anchors") {
  FittedCurve curve;
  curve.slope = 2.0;
  curve.saturation = 50.0;
  curve.ceiling = 10.0;
  const auto points = mmm::curve_points(curve, {0.0, 50.0, 500.0});
  CHECK(points[0].y == 0.0);
  CHECK(points[1].y == doctest::Approx(5.0).epsilon(1e-12));
  // x = 10 g with a = 2: 100/101 of the ceiling.
  CHECK(points[2].y == doctest::Approx(10.0 * 100.0 / 101.0).epsilon(1e-12));
  CHECK(points[0].y <= points[1].y);
  CHECK(points[1].y <= points[2].y);
}

TEST_CASE("fit is covariant under driver rescaling") {
  const CurveData base = log_spaced_curve(100.0, 2.5, 1000.0, 20, 10.0, 1e5);
  CurveData scaled = base;
  for (CurvePoint& p : scaled.points) p.x *= 7.5;
  const FittedCurve a = mmm::fit_curve(base);
  const FittedCurve b = mmm::fit_curve(scaled);
  CHECK(std::abs(b.slope - a.slope) < 1e-6 * a.slope);
  CHECK(std::abs(b.saturation - 7.5 * a.saturation) < 1e-6 * 7.5 * a.saturation);
}

TEST_CASE("fitting is deterministic") {
  mmm::Rng rng(31);
  CurveData data = log_spaced_curve(60.0, 2.2, 300.0, 18, 2.0, 3e3);
  for (CurvePoint& p : data.points) p.y *= 1.0 + 0.03 * rng.normal();
  const FittedCurve a = mmm::fit_curve(data);
  const FittedCurve b = mmm::fit_curve(data);
  CHECK(a.slope == b.slope);
  CHECK(a.saturation == b.saturation);
  CHECK(a.ceiling == b.ceiling);
  CHECK(a.sse == b.sse);
}

TEST_SUITE_END();
