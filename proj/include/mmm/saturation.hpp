#pragma once

#include <cmath>

namespace mmm {

/// Hill saturation parameters. The slope exponent is kept at 2 or above so
/// the response is a proper S-curve; g is the half-saturation point.
struct HillParams {
  double a = 2.0;
  double g = 0.5;

  bool valid() const { return a >= 2.0 && g > 0.0; }
};

/// Unconstrained parameters; constrain() maps them onto valid HillParams.
struct HillRaw {
  double a_raw = 0.0;
  double g_raw = 0.0;
};

struct HillGrads {
  double dx = 0.0;
  double da = 0.0;
  double dg = 0.0;
};

/// Numerically stable softplus and its derivative (the logistic sigmoid).
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr double kHillSlopeFloor = 2.0;
constexpr double kHillHalfSatFloor = 1e-4;

/// Smooth map from unconstrained raws to valid parameters:
/// a = 2 + softplus(a_raw), g = softplus(g_raw) + 1e-4.
inline HillParams constrain(const HillRaw& raw) {
  return {kHillSlopeFloor + softplus(raw.a_raw), softplus(raw.g_raw) + kHillHalfSatFloor};
}

/// Hill response y = x^a / (x^a + g^a) for x >= 0, evaluated as
/// 1 / (1 + (g/x)^a) which stays stable for extreme x/g ratios.
double hill(double x, const HillParams& p);

/// Analytic partials of hill() with respect to x, a, g.
/// At x = 0 the transform is flat for a >= 2 and all partials are zero.
HillGrads hill_gradients(double x, const HillParams& p);

}  // namespace mmm
