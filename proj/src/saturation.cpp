#include "mmm/saturation.hpp"

#include "mmm/errors.hpp"

namespace mmm {

namespace {

// (g/x)^a computed through logs; clamped so exp() cannot overflow.
double power_ratio(double x, const HillParams& p) {
  const double e = p.a * (std::log(p.g) - std::log(x));
  if (e > 700.0) return std::exp(700.0);
  return std::exp(e);
}

}  // namespace

double hill(double x, const HillParams& p) {
  require(x >= 0.0, ErrorCode::invalid_argument, "hill: x must be nonnegative");
  require(p.valid(), ErrorCode::invalid_argument, "hill: invalid parameters");
  if (x == 0.0) return 0.0;
  return 1.0 / (1.0 + power_ratio(x, p));
}

HillGrads hill_gradients(double x, const HillParams& p) {
  require(x >= 0.0, ErrorCode::invalid_argument, "hill_gradients: x must be nonnegative");
  require(p.valid(), ErrorCode::invalid_argument, "hill_gradients: invalid parameters");
  HillGrads g;
  if (x == 0.0) return g;

  // With t = (g/x)^a and y = 1/(1+t), all three partials share u = y(1-y):
  //   dy/dx = a u / x, dy/da = u ln(x/g), dy/dg = -a u / g.
  const double t = power_ratio(x, p);
  const double y = 1.0 / (1.0 + t);
  const double u = y * (1.0 - y);
  g.dx = p.a * u / x;
  g.da = u * (std::log(x) - std::log(p.g));
  g.dg = -p.a * u / p.g;
  return g;
}

}  // namespace mmm
