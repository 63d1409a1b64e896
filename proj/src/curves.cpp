#include "mmm/curves.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mmm/errors.hpp"
#include "mmm/saturation.hpp"

namespace mmm {

void CurveData::validate() const {
  require(points.size() >= 8, ErrorCode::invalid_argument,
          "curve data: need at least 8 points");
  std::set<double> distinct;
  for (const CurvePoint& p : points) {
    require(p.x >= 0.0, ErrorCode::invalid_argument, "curve data: negative driver level");
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::invalid_argument,
            "curve data: non-finite point");
    distinct.insert(p.x);
  }
  require(distinct.size() >= 3, ErrorCode::invalid_argument,
          "curve data: need at least 3 distinct driver levels");
}

namespace {

// Unit-height Hill value, stable across extreme x/g ratios.
double hill_unit(double x, double a, double g) {
  if (x <= 0.0) return 0.0;
  const double e = a * (std::log(g) - std::log(x));
  if (e > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(e));
}

struct CurveGuess {
  double a_raw = 0.0;
  double log_g = 0.0;
  double log_m = 0.0;
};

double sse_at(const std::vector<CurvePoint>& pts, double a, double g, double m) {
  double sse = 0.0;
  for (const CurvePoint& p : pts) {
    const double r = m * hill_unit(p.x, a, g) - p.y;
    sse += r * r;
  }
  return sse;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

FittedCurve fit_curve(const CurveData& data) {
  data.validate();
  const std::vector<CurvePoint>& pts = data.points;
  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());

  const double y_min = std::min_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                         return a.y < b.y;
                       })->y;
  const double y_max = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                         return a.y < b.y;
                       })->y;
  require(y_max > y_min, ErrorCode::degenerate, "fit_curve: all responses are equal");

  double x_lo = 0.0, x_hi = 0.0;
  for (const CurvePoint& p : pts) {
    if (p.x > 0.0 && (x_lo == 0.0 || p.x < x_lo)) x_lo = p.x;
    x_hi = std::max(x_hi, p.x);
  }
  require(x_hi > 0.0, ErrorCode::degenerate, "fit_curve: all driver levels are zero");
  if (x_lo == x_hi) x_lo = x_hi * 1e-3;

  // Grid over (a, g); the ceiling has a closed-form least-squares solution
  // once the shape is fixed.
  static const double slope_starts[] = {2.0, 2.5, 3.0, 4.0, 6.0};
  std::vector<double> g_starts;
  for (int i = 0; i < 7; ++i) {
    g_starts.push_back(x_lo * std::pow(x_hi / x_lo, static_cast<double>(i) / 6.0));
  }

  double best_sse = std::numeric_limits<double>::infinity();
  CurveGuess best;
  for (const double a : slope_starts) {
    for (const double g : g_starts) {
      double phi_y = 0.0, phi_sq = 0.0;
      for (const CurvePoint& p : pts) {
        const double phi = hill_unit(p.x, a, g);
        phi_y += phi * p.y;
        phi_sq += phi * phi;
      }
      if (phi_sq <= 0.0) continue;
      const double m = phi_y / phi_sq;
      if (!(m > 0.0)) continue;
      const double sse = sse_at(pts, a, g, m);
      if (sse < best_sse) {
        best_sse = sse;
        best = {a > 2.0 ? inverse_softplus(a - 2.0) : -30.0, std::log(g), std::log(m)};
      }
    }
  }
  require(std::isfinite(best_sse), ErrorCode::degenerate,
          "fit_curve: no usable starting point");

  // Damped Gauss-Newton on (a_raw, log g, log M).
  CurveGuess guess = best;
  double damping = 1e-3;
  bool converged = false;
  Eigen::Matrix3d jtj;
  Eigen::Vector3d jtr, delta;
  Vector residual(n);
  Matrix jacobian(n, 3);

  const auto unpack = [](const CurveGuess& q, double& a, double& g, double& m) {
    a = 2.0 + softplus(q.a_raw);
    g = std::exp(q.log_g);
    m = std::exp(q.log_m);
  };

  for (int iter = 0; iter < 200; ++iter) {
    double a, g, m;
    unpack(guess, a, g, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double phi = hill_unit(pts[i].x, a, g);
      const double fitted = m * phi;
      residual[i] = fitted - pts[i].y;
      const double u = phi * (1.0 - phi);
      const double dlog = pts[i].x > 0.0 ? std::log(pts[i].x / g) : 0.0;
      jacobian(i, 0) = m * u * dlog * sigmoid(guess.a_raw);  // d/d a_raw
      jacobian(i, 1) = -m * a * u;                           // d/d log g
      jacobian(i, 2) = fitted;                               // d/d log M
    }
    const double sse = residual.squaredNorm();

    jtj = jacobian.transpose() * jacobian;
    jtr = jacobian.transpose() * residual;
    if (jtr.norm() < 1e-14 * std::max(1.0, sse)) {
      best_sse = std::min(best_sse, sse);
      converged = true;
      break;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::Matrix3d damped = jtj;
      damped.diagonal().array() += damping;
      delta = damped.ldlt().solve(-jtr);
      CurveGuess trial = guess;
      trial.a_raw += delta[0];
      trial.log_g += delta[1];
      trial.log_m += delta[2];
      double ta, tg, tm;
      unpack(trial, ta, tg, tm);
      const double trial_sse = sse_at(pts, ta, tg, tm);
      if (trial_sse < sse) {
        guess = trial;
        best_sse = trial_sse;
        damping = std::max(damping * 0.1, 1e-12);
        stepped = true;
        if (sse - trial_sse < 1e-14 * (sse + 1e-300)) converged = true;
        break;
      }
      damping *= 10.0;  // residual increased; damp harder
    }
    if (!stepped || converged) {
      converged = converged || !stepped;
      break;
    }
  }

  double a, g, m;
  unpack(guess, a, g, m);
  // Refinement never worsens the best grid candidate.
  if (sse_at(pts, a, g, m) > best_sse + 1e-12 * (1.0 + best_sse)) {
    unpack(best, a, g, m);
  }

  FittedCurve curve;
  curve.slope = a;
  curve.saturation = g;
  curve.ceiling = m;
  curve.sse = sse_at(pts, a, g, m);
  curve.converged = converged;

  double mean = 0.0;
  for (const CurvePoint& p : pts) mean += p.y;
  mean /= static_cast<double>(n);
  double ss_tot = 0.0;
  for (const CurvePoint& p : pts) ss_tot += (p.y - mean) * (p.y - mean);
  curve.r2 = ss_tot > 0.0 ? 1.0 - curve.sse / ss_tot : 0.0;
  return curve;
}

std::pair<double, double> saturation_point(const FittedCurve& curve) {
  return {curve.saturation, curve.ceiling / 2.0};
}

std::vector<CurvePoint> curve_points(const FittedCurve& curve, const std::vector<double>& grid) {
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (double x : grid) {
    require(x >= 0.0, ErrorCode::invalid_argument, "curve_points: negative grid value");
    out.push_back({x, curve.ceiling * hill_unit(x, curve.slope, curve.saturation)});
  }
  return out;
}

}  // namespace mmm
