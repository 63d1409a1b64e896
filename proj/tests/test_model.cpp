#include <doctest.h>

#include <cmath>

#include "mmm/errors.hpp"
#include "mmm/model.hpp"
#include "mmm/rng.hpp"
#include "mmm/trainer.hpp"
#include "support/oracles.hpp"

using mmm::Matrix;
using mmm::ModelDims;
using mmm::ModelParams;
using mmm::PanelDataset;
using mmm::Vector;

namespace {

PanelDataset scaled_test_panel(int regions, int weeks, int channels, int controls,
                               std::uint64_t seed) {
  mmm::SynthConfig config;
  config.seed = seed;
  config.regions = regions;
  config.weeks = weeks;
  config.channels = channels;
  config.controls = controls;
  config.noise_level = 0.02;
  const PanelDataset raw = mmm::generate_synthetic(config).first;
  return mmm::apply_scaling(raw, mmm::fit_scaling(raw));
}

ModelParams test_params(const PanelDataset& scaled, int hidden, std::uint64_t seed) {
  ModelDims dims;
  dims.regions = scaled.regions();
  dims.channels = scaled.channels();
  dims.controls = scaled.controls();
  dims.hidden = hidden;
  ModelParams params = mmm::init_params(dims, scaled, seed, 0.1);
  // Perturb away from the symmetric start so gradients are informative.
  mmm::Rng rng(seed + 1);
  Vector flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += rng.uniform(-0.05, 0.05);
  params.set_flat(flat);
  return params;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("gru cell with all-zero weights and state") {
  mmm::GruParams p;
  p.wz = Matrix::Zero(2, 3);
  p.uz = Matrix::Zero(2, 2);
  p.bz = Vector::Zero(2);
  p.wr = p.wz;
  p.ur = p.uz;
  p.br = p.bz;
  p.wn = p.wz;
  p.un = p.uz;
  p.bn = p.bz;
  Vector x(3);
  x << 0.5, -0.2, 1.0;
  const Vector h = mmm::gru_cell(x, Vector::Zero(2), p);
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);  // z = 0.5, n = 0 -> h = 0
}

TEST_CASE("saturated update gate carries the previous state through") {
  mmm::GruParams p;
  p.wz = Matrix::Zero(2, 2);
  p.uz = Matrix::Zero(2, 2);
  p.bz = Vector::Constant(2, 50.0);  // z ~ 1
  p.wr = p.wz;
  p.ur = p.uz;
  p.br = Vector::Zero(2);
  p.wn = Matrix::Constant(2, 2, 0.7);
  p.un = Matrix::Zero(2, 2);
  p.bn = Vector::Zero(2);
  Vector x(2);
  x << 1.0, 1.0;
  Vector h_prev(2);
  h_prev << 0.3, -0.6;
  const Vector h = mmm::gru_cell(x, h_prev, p);
  CHECK((h - h_prev).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gru cell matches the scalar oracle") {
  mmm::Rng rng(5);
  const int input = 4, hidden = 3;
  mmm::GruParams p;
  const auto fill = [&rng](Matrix& m, int rows, int cols) {
    m = Matrix(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-0.8, 0.8);
    }
  };
  fill(p.wz, hidden, input);
  fill(p.uz, hidden, hidden);
  fill(p.wr, hidden, input);
  fill(p.ur, hidden, hidden);
  fill(p.wn, hidden, input);
  fill(p.un, hidden, hidden);
  p.bz = Vector::Zero(hidden);
  p.br = Vector::Zero(hidden);
  p.bn = Vector::Zero(hidden);
  for (int i = 0; i < hidden; ++i) {
    p.bz[i] = rng.uniform(-0.3, 0.3);
    p.br[i] = rng.uniform(-0.3, 0.3);
    p.bn[i] = rng.uniform(-0.3, 0.3);
  }

  oracles::ScalarGru oracle;
  oracle.input = input;
  oracle.hidden = hidden;
  const auto to_rows = [](const Matrix& m) {
    std::vector<double> out;
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    }
    return out;
  };
  oracle.wz = to_rows(p.wz);
  oracle.uz = to_rows(p.uz);
  oracle.wr = to_rows(p.wr);
  oracle.ur = to_rows(p.ur);
  oracle.wn = to_rows(p.wn);
  oracle.un = to_rows(p.un);
  oracle.bz = to_rows(p.bz);
  oracle.br = to_rows(p.br);
  oracle.bn = to_rows(p.bn);

  Vector x(input), h(hidden);
  for (int i = 0; i < input; ++i) x[i] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < hidden; ++i) h[i] = rng.uniform(-0.9, 0.9);
  const Vector got = mmm::gru_cell(x, h, p);
  const std::vector<double> expected =
      oracle.step({x.data(), x.data() + input}, {h.data(), h.data() + hidden});
  for (int i = 0; i < hidden; ++i) {
    CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("hidden state stays inside the unit box") {
  const PanelDataset scaled = scaled_test_panel(2, 40, 3, 1, 8);
  const ModelParams params = test_params(scaled, 5, 17);
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 2);
  for (const auto& region : trace.region) {
    CHECK(region.hidden.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("zero drivers and controls predict the baseline") {
  PanelDataset scaled = scaled_test_panel(2, 10, 2, 1, 9);
  for (int r = 0; r < scaled.regions(); ++r) {
    scaled.drivers[r].setZero();
    scaled.controls_data[r].setZero();
  }
  const ModelParams params = test_params(scaled, 4, 3);
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  for (int r = 0; r < scaled.regions(); ++r) {
    for (int t = 0; t < scaled.weeks(); ++t) {
      CHECK(trace.region[r].prediction[t] ==
            doctest::Approx(params.region.baseline[r]).epsilon(1e-12));
    }
  }
}

TEST_CASE("coefficients respect the learnable bounds") {
  const PanelDataset scaled = scaled_test_panel(2, 25, 3, 1, 10);
  const ModelParams params = test_params(scaled, 4, 21);
  const Vector low = params.head.low();
  const Vector high = params.head.high();
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  for (const auto& region : trace.region) {
    for (int t = 0; t < region.beta.rows(); ++t) {
      for (int c = 0; c < region.beta.cols(); ++c) {
        CHECK(region.beta(t, c) >= low[c]);
        CHECK(region.beta(t, c) <= high[c]);
        CHECK(low[c] == 0.0);
      }
    }
  }
}

TEST_CASE("tiny model forward matches a scalar reimplementation") {
  // R=1, T=5, C=1, H=2: every stage evaluated with plain scalar arithmetic.
  const PanelDataset scaled = scaled_test_panel(1, 5, 1, 0, 12);
  const ModelParams params = test_params(scaled, 2, 33);
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);

  oracles::ScalarGru oracle;
  oracle.input = 1;
  oracle.hidden = 2;
  const auto to_rows = [](const Matrix& m) {
    std::vector<double> out;
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    }
    return out;
  };
  oracle.wz = to_rows(params.gru.wz);
  oracle.uz = to_rows(params.gru.uz);
  oracle.bz = to_rows(params.gru.bz);
  oracle.wr = to_rows(params.gru.wr);
  oracle.ur = to_rows(params.gru.ur);
  oracle.br = to_rows(params.gru.br);
  oracle.wn = to_rows(params.gru.wn);
  oracle.un = to_rows(params.gru.un);
  oracle.bn = to_rows(params.gru.bn);

  const double a = 2.0 + std::log1p(std::exp(params.hill[0].a_raw));
  const double g = std::log1p(std::exp(params.hill[0].g_raw)) + 1e-4;
  const double gap = std::log1p(std::exp(params.head.high_raw[0])) + 1e-3;
  const double gamma = std::log1p(std::exp(params.region.scale_raw[0])) + 1e-3;

  std::vector<double> h = {0.0, 0.0};
  for (int t = 0; t < 5; ++t) {
    const double x = scaled.drivers[0](t, 0);
    const double sat = x > 0.0 ? std::pow(x, a) / (std::pow(x, a) + std::pow(g, a)) : 0.0;
    const double mixed = sat;  // single channel: no parents
    h = oracle.step({mixed}, h);
    const double q =
        params.head.projection(0, 0) * h[0] + params.head.projection(0, 1) * h[1] +
        params.head.bias[0];
    const double beta = gap / (1.0 + std::exp(-q));
    const double prediction = params.region.baseline[0] + gamma * beta * mixed;
    CHECK(trace.region[0].prediction[t] == doctest::Approx(prediction).epsilon(1e-10));
  }
}

TEST_CASE("flatten and restore round trip exactly") {
  const PanelDataset scaled = scaled_test_panel(3, 15, 2, 2, 14);
  const ModelParams params = test_params(scaled, 4, 99);
  const Vector flat = params.flatten();
  ModelParams other = params;
  other.set_flat(Vector::Zero(flat.size()));
  other.set_flat(flat);
  CHECK(other.flatten() == flat);
  CHECK(params.parameter_count() == flat.size());
}

TEST_CASE("zero upstream gradient gives a zero parameter gradient") {
  const PanelDataset scaled = scaled_test_panel(2, 8, 2, 1, 15);
  const ModelParams params = test_params(scaled, 3, 4);
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  std::vector<Vector> upstream(2, Vector::Zero(8));
  const Vector grad = mmm::backward(params, scaled, trace, upstream);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("baseline gradient accumulates the upstream weights") {
  const PanelDataset scaled = scaled_test_panel(2, 8, 2, 1, 16);
  ModelParams params = test_params(scaled, 3, 5);
  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  mmm::Rng rng(6);
  std::vector<Vector> upstream;
  for (int r = 0; r < 2; ++r) {
    Vector u(8);
    for (int t = 0; t < 8; ++t) u[t] = rng.uniform(-1.0, 1.0);
    upstream.push_back(u);
  }
  const Vector grad = mmm::backward(params, scaled, trace, upstream);

  // Locate the baseline block through the flatten layout itself, then compare
  // against the analytic per-region sums.
  ModelParams probe = params;
  probe.set_flat(Vector::Zero(params.parameter_count()));
  probe.region.baseline = Vector::Ones(2);
  const Vector mask = probe.flatten();

  ModelParams expected = params;
  expected.set_flat(Vector::Zero(params.parameter_count()));
  expected.region.baseline[0] = upstream[0].sum();
  expected.region.baseline[1] = upstream[1].sum();
  const Vector expected_flat = expected.flatten();
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0) {
      CHECK(grad[i] == doctest::Approx(expected_flat[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward matches central finite differences on a tiny model") {
  const PanelDataset scaled = scaled_test_panel(2, 6, 2, 1, 18);
  const ModelParams params = test_params(scaled, 3, 7);

  mmm::Rng rng(8);
  std::vector<Vector> upstream;
  for (int r = 0; r < 2; ++r) {
    Vector u(6);
    for (int t = 0; t < 6; ++t) u[t] = rng.uniform(-1.0, 1.0);
    upstream.push_back(u);
  }

  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  const Vector analytic = mmm::backward(params, scaled, trace, upstream);

  ModelParams probe = params;
  const auto loss = [&](const Vector& flat) {
    probe.set_flat(flat);
    const mmm::ForwardTrace t = mmm::forward(probe, scaled, 0);
    double total = 0.0;
    for (int r = 0; r < 2; ++r) total += upstream[r].dot(t.region[r].prediction);
    return total;
  };
  const double err = mmm::finite_difference_check(loss, params.flatten(), analytic, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("contribution decomposition is additive in original units") {
  mmm::SynthConfig config;
  config.seed = 23;
  config.regions = 3;
  config.weeks = 20;
  config.channels = 3;
  config.controls = 2;
  const PanelDataset raw = mmm::generate_synthetic(config).first;
  const mmm::ScalingInfo scaling = mmm::fit_scaling(raw);
  const PanelDataset scaled = mmm::apply_scaling(raw, scaling);
  const ModelParams params = test_params(scaled, 4, 31);

  const mmm::ForwardTrace trace = mmm::forward(params, scaled, 0);
  const mmm::Contributions parts = mmm::decompose_contributions(params, trace, scaling, scaled);
  for (int r = 0; r < raw.regions(); ++r) {
    for (int t = 0; t < raw.weeks(); ++t) {
      double total = parts.baseline[r];
      for (int c = 0; c < raw.channels(); ++c) total += parts.channel[r](t, c);
      for (int k = 0; k < raw.controls(); ++k) total += parts.control[r](t, k);
      const double reference = parts.prediction[r][t];
      CHECK(std::abs(total - reference) <=
            1e-8 * std::max(1.0, std::abs(reference)));
    }
  }
}

TEST_CASE("doubling the region scale doubles channel contributions only") {
  const PanelDataset scaled = scaled_test_panel(1, 12, 2, 0, 26);
  ModelParams params = test_params(scaled, 3, 41);
  const mmm::ScalingInfo identity{Matrix::Ones(1, 2), Vector::Ones(1), Vector(0), Vector(0)};

  const mmm::Contributions base = mmm::decompose_contributions(
      params, mmm::forward(params, scaled, 0), identity, scaled);

  const double gamma = params.region.gamma()[0];
  ModelParams doubled = params;
  doubled.region.scale_raw[0] = std::log(std::expm1(2.0 * gamma - 1e-3));
  const mmm::Contributions twice = mmm::decompose_contributions(
      doubled, mmm::forward(doubled, scaled, 0), identity, scaled);

  CHECK(twice.baseline[0] == base.baseline[0]);
  for (int t = 0; t < 12; ++t) {
    for (int c = 0; c < 2; ++c) {
      CHECK(twice.channel[0](t, c) == doctest::Approx(2.0 * base.channel[0](t, c)).epsilon(1e-9));
    }
  }
}

TEST_SUITE_END();
