#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmm/numeric.hpp"

namespace mmm {

struct CurvePoint {
  double x = 0.0;  // driver level, original units
  double y = 0.0;  // response, KPI units
};

/// Observed driver/response pairs for one channel. Needs at least 8 points
/// with at least 3 distinct driver levels.
struct CurveData {
  std::vector<CurvePoint> points;
  std::string level = "Overall";  // or "Region"

  void validate() const;
};

/// Hill curve y = M x^a / (x^a + g^a) fitted to observed data.
struct FittedCurve {
  double slope = 2.0;       // a, kept at 2 or above
  double saturation = 1.0;  // g, original driver units
  double ceiling = 1.0;     // M, KPI units
  double r2 = 0.0;
  double sse = 0.0;
  bool converged = true;
};

/// Least-squares fit: a multi-start grid over (a, g) with the ceiling solved
/// in closed form per start, then damped Gauss-Newton refinement with the
/// slope constrained >= 2 through the softplus reparameterization.
/// Deterministic. Throws degenerate when every response is identical; when
/// refinement hits the iteration cap the best-so-far fit is returned with
/// converged = false.
FittedCurve fit_curve(const CurveData& data);

/// Half-saturation point of a fitted curve: (g, M/2).
std::pair<double, double> saturation_point(const FittedCurve& curve);

/// Model evaluated on a sorted nonnegative grid.
std::vector<CurvePoint> curve_points(const FittedCurve& curve, const std::vector<double>& grid);

}  // namespace mmm
