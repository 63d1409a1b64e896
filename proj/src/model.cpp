#include "mmm/model.hpp"

#include <cmath>

#include "mmm/errors.hpp"
#include "mmm/rng.hpp"

namespace mmm {

namespace {

constexpr double kGapFloor = 1e-3;
constexpr double kGammaFloor = 1e-3;

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

Vector softplus_vec(const Vector& v) {
  return v.unaryExpr([](double x) { return softplus(x); });
}

Vector sigmoid_vec(const Vector& v) {
  return v.unaryExpr([](double x) { return sigmoid(x); });
}

}  // namespace

Vector CoefficientHead::low() const {
  if (!learn_low) return Vector::Zero(low_raw.size());
  return softplus_vec(low_raw);
}

Vector CoefficientHead::gap() const {
  return high_raw.unaryExpr([](double x) { return softplus(x) + kGapFloor; });
}

Vector CoefficientHead::high() const { return low() + gap(); }

Vector RegionParams::gamma() const {
  return scale_raw.unaryExpr([](double x) { return softplus(x) + kGammaFloor; });
}

Vector gru_cell(const Vector& x, const Vector& h_prev, const GruParams& p) {
  require(x.size() == p.input_size() && h_prev.size() == p.hidden_size(), ErrorCode::dimension,
          "gru_cell: size mismatch");
  const Vector z = sigmoid_vec(p.wz * x + p.uz * h_prev + p.bz);
  const Vector r = sigmoid_vec(p.wr * x + p.ur * h_prev + p.br);
  const Vector n = (p.wn * x + p.un * r.cwiseProduct(h_prev) + p.bn).array().tanh();
  return (Vector::Ones(z.size()) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
}

ModelDims ModelParams::dims() const {
  ModelDims d;
  d.regions = static_cast<int>(region.baseline.size());
  d.channels = static_cast<int>(head.projection.rows());
  d.controls = static_cast<int>(control_coefs.size());
  d.hidden = gru.hidden_size();
  return d;
}

Eigen::Index ModelParams::parameter_count() const {
  const ModelDims d = dims();
  const Eigen::Index h = d.hidden;
  const Eigen::Index i = d.gru_input();
  const Eigen::Index c = d.channels;
  const Eigen::Index r = d.regions;
  const Eigen::Index k = d.controls;
  return 3 * (h * i + h * h + h)  // GRU gates
         + c * h + 3 * c          // head projection, bias, low_raw, high_raw
         + 2 * r                  // baseline, scale_raw
         + 2 * c                  // hill raws
         + c * c                  // dag weights
         + k;                     // control coefficients
}

namespace {

// Shared walker so flatten and set_flat cannot disagree on the layout.
template <typename MatrixFn, typename ScalarFn>
void walk_params(ModelParams& p, MatrixFn&& on_block, ScalarFn&& on_scalar) {
  const auto block = [&](auto& m) { on_block(m); };
  block(p.gru.wz);
  block(p.gru.uz);
  block(p.gru.bz);
  block(p.gru.wr);
  block(p.gru.ur);
  block(p.gru.br);
  block(p.gru.wn);
  block(p.gru.un);
  block(p.gru.bn);
  block(p.head.projection);
  block(p.head.bias);
  block(p.head.low_raw);
  block(p.head.high_raw);
  block(p.region.baseline);
  block(p.region.scale_raw);
  for (HillRaw& h : p.hill) {
    on_scalar(h.a_raw);
    on_scalar(h.g_raw);
  }
  block(p.dag.w);
  block(p.control_coefs);
}

}  // namespace

Vector ModelParams::flatten() const {
  Vector flat(parameter_count());
  Eigen::Index cursor = 0;
  auto& self = const_cast<ModelParams&>(*this);
  walk_params(
      self,
      [&](auto& m) {
        flat.segment(cursor, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
        cursor += m.size();
      },
      [&](double& s) { flat[cursor++] = s; });
  require(cursor == flat.size(), ErrorCode::dimension, "flatten: layout mismatch");
  return flat;
}

void ModelParams::set_flat(const Vector& flat) {
  require(flat.size() == parameter_count(), ErrorCode::dimension,
          "set_flat: wrong parameter vector length");
  Eigen::Index cursor = 0;
  walk_params(
      *this,
      [&](auto& m) {
        Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(cursor, m.size());
        cursor += m.size();
      },
      [&](double& s) { s = flat[cursor++]; });
  dag.w.diagonal().setZero();
}

ModelParams init_params(const ModelDims& dims, const PanelDataset& scaled_train,
                        std::uint64_t seed, double dag_threshold, bool learn_low) {
  require(dims.regions == scaled_train.regions() && dims.channels == scaled_train.channels() &&
              dims.controls == scaled_train.controls(),
          ErrorCode::dimension, "init_params: dims do not match panel");
  require(dims.hidden >= 1, ErrorCode::invalid_argument, "init_params: hidden size must be >= 1");

  Rng rng(seed);
  const auto fill_uniform = [&rng](Matrix& m, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        m(row, col) = rng.uniform(-bound, bound);
      }
    }
  };

  const int h = dims.hidden;
  const int in = dims.gru_input();
  ModelParams p;
  p.seed = seed;
  p.gru.wz = Matrix(h, in);
  p.gru.uz = Matrix(h, h);
  p.gru.bz = Vector::Zero(h);
  p.gru.wr = Matrix(h, in);
  p.gru.ur = Matrix(h, h);
  p.gru.br = Vector::Zero(h);
  p.gru.wn = Matrix(h, in);
  p.gru.un = Matrix(h, h);
  p.gru.bn = Vector::Zero(h);
  fill_uniform(p.gru.wz, in);
  fill_uniform(p.gru.uz, h);
  fill_uniform(p.gru.wr, in);
  fill_uniform(p.gru.ur, h);
  fill_uniform(p.gru.wn, in);
  fill_uniform(p.gru.un, h);

  p.head.projection = Matrix(dims.channels, h);
  fill_uniform(p.head.projection, h);
  p.head.bias = Vector::Zero(dims.channels);
  p.head.low_raw = Vector::Zero(dims.channels);
  p.head.high_raw = Vector::Constant(dims.channels, inverse_softplus(1.0 - kGapFloor));
  p.head.learn_low = learn_low;

  p.region.baseline = Vector(dims.regions);
  for (int r = 0; r < dims.regions; ++r) p.region.baseline[r] = scaled_train.kpi[r].mean();
  p.region.scale_raw = Vector::Constant(dims.regions, inverse_softplus(1.0 - kGammaFloor));

  p.hill.assign(dims.channels, HillRaw{0.0, inverse_softplus(0.5 - kHillHalfSatFloor)});
  p.dag = DagState::make(dims.channels, dag_threshold);
  p.control_coefs = Vector::Zero(dims.controls);
  return p;
}

namespace {

void check_forward_inputs(const ModelParams& params, const PanelDataset& scaled, int burn_in) {
  scaled.validate();
  const ModelDims d = params.dims();
  require(d.regions == scaled.regions() && d.channels == scaled.channels() &&
              d.controls == scaled.controls(),
          ErrorCode::dimension, "forward: panel does not match model dimensions");
  require(burn_in >= 0 && burn_in < scaled.weeks(), ErrorCode::invalid_argument,
          "forward: burn_in must be in [0, weeks)");
}

}  // namespace

ForwardTrace forward(const ModelParams& params, const PanelDataset& scaled, int burn_in) {
  check_forward_inputs(params, scaled, burn_in);
  const ModelDims d = params.dims();
  const int t_count = scaled.weeks();
  const int h = d.hidden;
  const int c = d.channels;
  const int k = d.controls;

  std::vector<HillParams> hill_params(c);
  for (int j = 0; j < c; ++j) hill_params[j] = constrain(params.hill[j]);
  const Vector low = params.head.low();
  const Vector gap = params.head.gap();
  const Vector gamma = params.region.gamma();

  ForwardTrace trace;
  trace.burn_in = burn_in;
  trace.region.resize(d.regions);

  Vector input(d.gru_input());
  Vector h_prev(h), az(h), ar(h), an(h), z(h), r_gate(h), n_gate(h), h_cur(h);
  Vector sat(c), mixed(c), q(c), sig(c), beta(c);

  for (int r = 0; r < d.regions; ++r) {
    RegionTrace& rt = trace.region[r];
    rt.saturated = Matrix(t_count, c);
    rt.mixed = Matrix(t_count, c);
    rt.hidden = Matrix(t_count, h);
    rt.gate_z = Matrix(t_count, h);
    rt.gate_r = Matrix(t_count, h);
    rt.gate_n = Matrix(t_count, h);
    rt.head_sig = Matrix(t_count, c);
    rt.beta = Matrix(t_count, c);
    rt.prediction = Vector(t_count);

    h_prev.setZero();
    for (int t = 0; t < t_count; ++t) {
      for (int j = 0; j < c; ++j) sat[j] = hill(scaled.drivers[r](t, j), hill_params[j]);
      mixed.noalias() = params.dag.w.transpose() * sat;
      mixed += sat;

      input.head(c) = mixed;
      if (k > 0) input.tail(k) = scaled.controls_data[r].row(t).transpose();

      az.noalias() = params.gru.wz * input;
      az.noalias() += params.gru.uz * h_prev;
      az += params.gru.bz;
      z = sigmoid_vec(az);
      ar.noalias() = params.gru.wr * input;
      ar.noalias() += params.gru.ur * h_prev;
      ar += params.gru.br;
      r_gate = sigmoid_vec(ar);
      an.noalias() = params.gru.wn * input;
      an.noalias() += params.gru.un * r_gate.cwiseProduct(h_prev);
      an += params.gru.bn;
      n_gate = an.array().tanh();
      h_cur = (Vector::Ones(h) - z).cwiseProduct(n_gate) + z.cwiseProduct(h_prev);

      q.noalias() = params.head.projection * h_cur;
      q += params.head.bias;
      sig = sigmoid_vec(q);
      beta = low + gap.cwiseProduct(sig);

      double prediction = params.region.baseline[r] + gamma[r] * beta.dot(mixed);
      if (k > 0) {
        prediction += params.control_coefs.dot(scaled.controls_data[r].row(t).transpose());
      }

      rt.saturated.row(t) = sat.transpose();
      rt.mixed.row(t) = mixed.transpose();
      rt.hidden.row(t) = h_cur.transpose();
      rt.gate_z.row(t) = z.transpose();
      rt.gate_r.row(t) = r_gate.transpose();
      rt.gate_n.row(t) = n_gate.transpose();
      rt.head_sig.row(t) = sig.transpose();
      rt.beta.row(t) = beta.transpose();
      rt.prediction[t] = prediction;

      h_prev = h_cur;
    }
  }
  return trace;
}

Vector backward(const ModelParams& params, const PanelDataset& scaled, const ForwardTrace& trace,
                const std::vector<Vector>& upstream) {
  check_forward_inputs(params, scaled, trace.burn_in);
  const ModelDims d = params.dims();
  const int t_count = scaled.weeks();
  require(static_cast<int>(trace.region.size()) == d.regions, ErrorCode::dimension,
          "backward: trace does not match model");
  require(static_cast<int>(upstream.size()) == d.regions, ErrorCode::dimension,
          "backward: upstream gradient region count mismatch");
  for (int r = 0; r < d.regions; ++r) {
    require(trace.region[r].prediction.size() == t_count, ErrorCode::dimension,
            "backward: trace week count mismatch");
    require(upstream[r].size() == t_count, ErrorCode::dimension,
            "backward: upstream gradient week count mismatch");
  }

  const int h = d.hidden;
  const int c = d.channels;
  const int k = d.controls;

  std::vector<HillParams> hill_params(c);
  for (int j = 0; j < c; ++j) hill_params[j] = constrain(params.hill[j]);
  const Vector gap = params.head.gap();
  const Vector gamma = params.region.gamma();

  // Gradient accumulators share the parameter struct so the flat layout is
  // guaranteed to line up with flatten().
  ModelParams grad = params;
  walk_params(
      grad, [](auto& m) { m.setZero(); }, [](double& s) { s = 0.0; });
  Vector grad_gamma = Vector::Zero(d.regions);
  Vector grad_gap = Vector::Zero(c);
  Vector grad_low = Vector::Zero(c);
  std::vector<double> grad_hill_a(c, 0.0), grad_hill_g(c, 0.0);

  Vector input(d.gru_input());
  Vector dh(h), dh_prev(h), dz(h), dn(h), dan(h), dar(h), daz(h), tmp(h), h_prev(h);
  Vector dbeta(c), dmixed(c), dq(c), dsat(c);

  for (int r = 0; r < d.regions; ++r) {
    const RegionTrace& rt = trace.region[r];
    dh.setZero();
    for (int t = t_count - 1; t >= 0; --t) {
      const double dpred = upstream[r][t];
      const auto mixed = rt.mixed.row(t).transpose();
      const auto sat = rt.saturated.row(t).transpose();
      const auto beta = rt.beta.row(t).transpose();
      const auto sig = rt.head_sig.row(t).transpose();
      const auto h_t = rt.hidden.row(t).transpose();
      const auto z = rt.gate_z.row(t).transpose();
      const auto r_gate = rt.gate_r.row(t).transpose();
      const auto n_gate = rt.gate_n.row(t).transpose();
      if (t > 0) {
        h_prev = rt.hidden.row(t - 1).transpose();
      } else {
        h_prev.setZero();
      }
      input.head(c) = mixed;
      if (k > 0) input.tail(k) = scaled.controls_data[r].row(t).transpose();

      // Prediction layer.
      grad.region.baseline[r] += dpred;
      grad_gamma[r] += dpred * beta.dot(mixed);
      dbeta = (dpred * gamma[r]) * mixed;
      dmixed = (dpred * gamma[r]) * beta;
      if (k > 0) {
        grad.control_coefs += dpred * scaled.controls_data[r].row(t).transpose();
      }

      // Coefficient head.
      grad_gap += dbeta.cwiseProduct(sig);
      if (params.head.learn_low) grad_low += dbeta;
      dq = dbeta.cwiseProduct(gap).cwiseProduct(sig).cwiseProduct(Vector::Ones(c) - sig);
      grad.head.projection.noalias() += dq * h_t.transpose();
      grad.head.bias += dq;
      dh.noalias() += params.head.projection.transpose() * dq;

      // GRU step.
      dz = dh.cwiseProduct(h_prev - n_gate);
      dn = dh.cwiseProduct(Vector::Ones(h) - z);
      dh_prev = dh.cwiseProduct(z);

      dan = dn.cwiseProduct(Vector::Ones(h) - n_gate.cwiseProduct(n_gate));
      grad.gru.wn.noalias() += dan * input.transpose();
      grad.gru.un.noalias() += dan * r_gate.cwiseProduct(h_prev).transpose();
      grad.gru.bn += dan;
      tmp.noalias() = params.gru.un.transpose() * dan;
      dar = tmp.cwiseProduct(h_prev);
      dh_prev += tmp.cwiseProduct(r_gate);
      dar = dar.cwiseProduct(r_gate).cwiseProduct(Vector::Ones(h) - r_gate);
      grad.gru.wr.noalias() += dar * input.transpose();
      grad.gru.ur.noalias() += dar * h_prev.transpose();
      grad.gru.br += dar;
      dh_prev.noalias() += params.gru.ur.transpose() * dar;

      daz = dz.cwiseProduct(z).cwiseProduct(Vector::Ones(h) - z);
      grad.gru.wz.noalias() += daz * input.transpose();
      grad.gru.uz.noalias() += daz * h_prev.transpose();
      grad.gru.bz += daz;
      dh_prev.noalias() += params.gru.uz.transpose() * daz;

      dmixed.noalias() += params.gru.wz.transpose().topRows(c) * daz;
      dmixed.noalias() += params.gru.wr.transpose().topRows(c) * dar;
      dmixed.noalias() += params.gru.wn.transpose().topRows(c) * dan;

      // DAG mixing: mixed = sat + W^T sat.
      grad.dag.w.noalias() += sat * dmixed.transpose();
      dsat = dmixed;
      dsat.noalias() += params.dag.w * dmixed;

      // Hill saturation.
      for (int j = 0; j < c; ++j) {
        const HillGrads hg = hill_gradients(scaled.drivers[r](t, j), hill_params[j]);
        grad_hill_a[j] += dsat[j] * hg.da;
        grad_hill_g[j] += dsat[j] * hg.dg;
      }

      dh = dh_prev;
    }
  }

  // Chain through the smooth reparameterizations.
  for (int j = 0; j < c; ++j) {
    grad.hill[j].a_raw = grad_hill_a[j] * sigmoid(params.hill[j].a_raw);
    grad.hill[j].g_raw = grad_hill_g[j] * sigmoid(params.hill[j].g_raw);
  }
  for (int r = 0; r < d.regions; ++r) {
    grad.region.scale_raw[r] = grad_gamma[r] * sigmoid(params.region.scale_raw[r]);
  }
  for (int j = 0; j < c; ++j) {
    grad.head.high_raw[j] = grad_gap[j] * sigmoid(params.head.high_raw[j]);
    grad.head.low_raw[j] =
        params.head.learn_low ? grad_low[j] * sigmoid(params.head.low_raw[j]) : 0.0;
  }
  grad.dag.w.diagonal().setZero();
  return grad.flatten();
}

Contributions decompose_contributions(const ModelParams& params, const ForwardTrace& trace,
                                      const ScalingInfo& scaling, const PanelDataset& scaled) {
  const ModelDims d = params.dims();
  require(static_cast<int>(trace.region.size()) == d.regions, ErrorCode::dimension,
          "decompose_contributions: trace region count mismatch");
  require(scaling.kpi_scale.size() == d.regions, ErrorCode::dimension,
          "decompose_contributions: scaling mismatch");

  const Vector gamma = params.region.gamma();
  Contributions out;
  out.baseline = Vector(d.regions);
  for (int r = 0; r < d.regions; ++r) {
    const RegionTrace& rt = trace.region[r];
    const double unit = scaling.kpi_scale[r];
    out.channel.push_back(gamma[r] * unit * rt.beta.cwiseProduct(rt.mixed));
    Matrix control(rt.prediction.size(), d.controls);
    for (int k = 0; k < d.controls; ++k) {
      control.col(k) = params.control_coefs[k] * unit * scaled.controls_data[r].col(k);
    }
    out.control.push_back(std::move(control));
    out.baseline[r] = params.region.baseline[r] * unit;
    out.prediction.push_back(unit * rt.prediction);
  }
  return out;
}

}  // namespace mmm
