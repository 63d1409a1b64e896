// Test-only oracles, deliberately independent of the library implementations
// they check: plain loops and direct series summation, no shared helpers.
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

// Matrix exponential by direct Taylor summation, no scaling-and-squaring.
// Adequate for the moderate norms used in tests.
inline Eigen::MatrixXd expm_taylor(const Eigen::MatrixXd& m, int terms = 150) {
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  for (int k = 1; k <= terms; ++k) {
    term = term * m / static_cast<double>(k);
    result += term;
  }
  return result;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One GRU step written with scalar loops against row-major weight tables.
// w* are hidden x input, u* are hidden x hidden.
struct ScalarGru {
  int input = 0;
  int hidden = 0;
  std::vector<double> wz, uz, bz, wr, ur, br, wn, un, bn;

  std::vector<double> step(const std::vector<double>& x, const std::vector<double>& h) const {
    std::vector<double> z(hidden), r(hidden), n(hidden), out(hidden);
    for (int i = 0; i < hidden; ++i) {
      double az = bz[i], ar = br[i];
      for (int j = 0; j < input; ++j) {
        az += wz[i * input + j] * x[j];
        ar += wr[i * input + j] * x[j];
      }
      for (int j = 0; j < hidden; ++j) {
        az += uz[i * hidden + j] * h[j];
        ar += ur[i * hidden + j] * h[j];
      }
      z[i] = sigmoid(az);
      r[i] = sigmoid(ar);
    }
    for (int i = 0; i < hidden; ++i) {
      double an = bn[i];
      for (int j = 0; j < input; ++j) an += wn[i * input + j] * x[j];
      for (int j = 0; j < hidden; ++j) an += un[i * hidden + j] * (r[j] * h[j]);
      n[i] = std::tanh(an);
      out[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
    }
    return out;
  }
};

// Population standard deviation.
inline double std_dev(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size()));
}

}  // namespace oracles
