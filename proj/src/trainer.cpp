#include "mmm/trainer.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mmm/errors.hpp"

namespace mmm {

using nlohmann::json;

void TrainConfig::validate(int total_weeks) const {
  const auto bad = [](const std::string& why) {
    fail(ErrorCode::invalid_argument, "train config: " + why);
  };
  if (epochs < 1) bad("epochs must be at least 1");
  if (learning_rate <= 0.0) bad("learning_rate must be positive");
  if (huber.delta <= 0.0) bad("huber delta must be positive");
  if (l1_coef < 0.0 || l2_coef < 0.0 || lambda_w < 0.0 || lambda_dag_fit < 0.0)
    bad("regularizer weights must be nonnegative");
  if (clip_norm <= 0.0) bad("clip_norm must be positive");
  if (holdout_weeks < 1) bad("holdout_weeks must be at least 1");
  if (holdout_weeks >= total_weeks) bad("holdout_weeks must leave at least one training week");
  if (burn_in < 0 || burn_in >= total_weeks - holdout_weeks)
    bad("burn_in must be smaller than the training week count");
  if (dual_update_interval < 1) bad("dual_update_interval must be at least 1");
  if (hidden_size < 1) bad("hidden_size must be at least 1");
  if (dag_threshold < 0.0) bad("dag_threshold must be nonnegative");
}

Matrix driver_gram_matrix(const PanelDataset& scaled) {
  const int c = scaled.channels();
  const double n = static_cast<double>(scaled.regions()) * static_cast<double>(scaled.weeks());

  // Centered: the self-regression explains co-movement, not channel means.
  Vector mean = Vector::Zero(c);
  for (int r = 0; r < scaled.regions(); ++r) {
    mean += scaled.drivers[r].colwise().sum().transpose();
  }
  mean /= n;

  Matrix gram = Matrix::Zero(c, c);
  for (int r = 0; r < scaled.regions(); ++r) {
    const Matrix centered = scaled.drivers[r].rowwise() - mean.transpose();
    gram.noalias() += centered.transpose() * centered;
  }
  gram /= n;

  // Pooled-scale normalization puts the term at unit magnitude regardless of
  // driver variance, the same convention the standalone learner uses.
  const double pooled = gram.trace() / static_cast<double>(c);
  if (pooled > 0.0) gram /= pooled;
  return gram;
}

LossResult composite_loss(const ModelParams& params, const PanelDataset& scaled_train,
                          const TrainConfig& config, const std::optional<Matrix>& driver_gram) {
  const int t_count = scaled_train.weeks();
  const int regions = scaled_train.regions();
  const int burn_in = config.burn_in;
  require(burn_in < t_count, ErrorCode::invalid_argument, "composite_loss: burn_in too large");

  const ForwardTrace trace = forward(params, scaled_train, burn_in);

  // Mean Huber loss over the non-burn-in weeks of every region.
  const int kept = t_count - burn_in;
  Vector residuals(static_cast<Eigen::Index>(regions) * kept);
  for (int r = 0; r < regions; ++r) {
    residuals.segment(static_cast<Eigen::Index>(r) * kept, kept) =
        trace.region[r].prediction.tail(kept) - scaled_train.kpi[r].tail(kept);
  }
  const HuberResult huber = huber_loss(residuals, config.huber);

  std::vector<Vector> upstream(regions);
  for (int r = 0; r < regions; ++r) {
    upstream[r] = Vector::Zero(t_count);
    upstream[r].tail(kept) = huber.grad.segment(static_cast<Eigen::Index>(r) * kept, kept);
  }

  LossResult out;
  out.loss = huber.loss;
  out.grad = backward(params, scaled_train, trace, upstream);

  // Regularizers and DAG terms go through a parameter-shaped buffer so their
  // placement in the flat vector cannot drift from the model layout.
  ModelParams extra = params;
  extra.set_flat(Vector::Zero(params.parameter_count()));

  const Matrix& projection = params.head.projection;
  out.loss += config.l1_coef * projection.cwiseAbs().sum() +
              config.l2_coef * projection.squaredNorm();
  extra.head.projection =
      config.l1_coef * projection.unaryExpr([](double v) {
        return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      }) +
      2.0 * config.l2_coef * projection;

  const DagPenaltyResult penalty = dag_penalty(params.dag, config.lambda_w);
  out.loss += penalty.value;
  extra.dag.w = penalty.grad;

  if (config.lambda_dag_fit > 0.0) {
    const Matrix gram =
        driver_gram.has_value() ? *driver_gram : driver_gram_matrix(scaled_train);
    const Matrix residual_map =
        Matrix::Identity(gram.rows(), gram.cols()) - params.dag.w;  // I - W
    out.loss += 0.5 * config.lambda_dag_fit * (residual_map.transpose() * gram * residual_map).trace();
    extra.dag.w += config.lambda_dag_fit * (gram * (params.dag.w - Matrix::Identity(gram.rows(), gram.cols())));
  }
  extra.dag.w.diagonal().setZero();

  out.grad += extra.flatten();
  return out;
}

Metrics compute_metrics(const std::vector<Vector>& actual, const std::vector<Vector>& predicted) {
  require(actual.size() == predicted.size(), ErrorCode::dimension,
          "compute_metrics: series count mismatch");
  double sum = 0.0;
  long count = 0;
  for (std::size_t r = 0; r < actual.size(); ++r) {
    require(actual[r].size() == predicted[r].size(), ErrorCode::dimension,
            "compute_metrics: series length mismatch");
    sum += actual[r].sum();
    count += actual[r].size();
  }
  require(count > 0, ErrorCode::invalid_argument, "compute_metrics: empty series");
  const double mean = sum / static_cast<double>(count);

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t r = 0; r < actual.size(); ++r) {
    ss_res += (actual[r] - predicted[r]).squaredNorm();
    ss_tot += (actual[r].array() - mean).square().sum();
  }
  require(ss_tot > 0.0, ErrorCode::degenerate, "compute_metrics: target has zero variance");
  require(mean > 0.0, ErrorCode::degenerate, "compute_metrics: target mean is not positive");

  Metrics m;
  m.r2 = 1.0 - ss_res / ss_tot;
  m.rmse = std::sqrt(ss_res / static_cast<double>(count));
  m.mean_kpi = mean;
  m.relative_error = m.rmse / mean;
  return m;
}

Metrics evaluate(const ModelParams& params, const PanelDataset& scaled,
                 const ScalingInfo& scaling, int burn_in, int week_begin, int week_end) {
  require(week_begin >= 0 && week_begin < week_end && week_end <= scaled.weeks(),
          ErrorCode::invalid_argument, "evaluate: invalid week range");
  const ForwardTrace trace = forward(params, scaled, std::min(burn_in, scaled.weeks() - 1));

  const int span = week_end - week_begin;
  std::vector<Vector> actual, predicted;
  for (int r = 0; r < scaled.regions(); ++r) {
    actual.push_back(scaling.kpi_scale[r] * scaled.kpi[r].segment(week_begin, span));
    predicted.push_back(scaling.kpi_scale[r] * trace.region[r].prediction.segment(week_begin, span));
  }
  return compute_metrics(actual, predicted);
}

TrainedModel train(const PanelDataset& data, const TrainConfig& config) {
  data.validate();
  config.validate(data.weeks());

  const int train_weeks = data.weeks() - config.holdout_weeks;
  const PanelDataset train_slice =
      temporal_split(data, {train_weeks, config.holdout_weeks}).first;

  // Scaling is fitted on the training block only; the holdout never touches
  // anything the parameters depend on.
  const ScalingInfo scaling = fit_scaling(train_slice);
  const PanelDataset scaled_full = apply_scaling(data, scaling);
  const PanelDataset scaled_train =
      temporal_split(scaled_full, {train_weeks, config.holdout_weeks}).first;

  ModelDims dims;
  dims.regions = data.regions();
  dims.channels = data.channels();
  dims.controls = data.controls();
  dims.hidden = config.hidden_size;

  ModelParams params =
      init_params(dims, scaled_train, config.seed, config.dag_threshold, config.learn_low);
  const Matrix gram = driver_gram_matrix(scaled_train);

  Vector flat = params.flatten();
  AdamState adam = AdamState::make(flat.size(), config.learning_rate);

  FitReport report;
  report.seed = config.seed;
  report.epochs = config.epochs;
  report.loss_history.reserve(config.epochs);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    params.set_flat(flat);
    const LossResult step = composite_loss(params, scaled_train, config, gram);
    if (!std::isfinite(step.loss)) {
      fail(ErrorCode::training, "train: non-finite loss at epoch " + std::to_string(epoch));
    }
    report.loss_history.push_back(step.loss);

    const Vector clipped = clip_gradient_norm(step.grad, config.clip_norm);
    adam_step(flat, clipped, adam);

    if ((epoch + 1) % config.dual_update_interval == 0) {
      params.set_flat(flat);
      dual_update(params.dag, acyclicity(params.dag.w).h);
    }
  }
  params.set_flat(flat);

  // Final thresholding projection: entries below the pruning magnitude (and
  // any cycle-broken leftovers) drop to exact zero, so the shipped W is the
  // reported edge list.
  prune_to_edges(params.dag);

  report.final_h = acyclicity(params.dag.w).h;
  if (!(report.final_h < 1e-8)) {
    report.warnings.push_back("acyclicity residual h(W) did not reach 1e-8; got " +
                              std::to_string(report.final_h));
  }
  report.edges = extract_edges(params.dag);

  report.train = evaluate(params, scaled_full, scaling, config.burn_in, config.burn_in,
                          train_weeks);
  report.holdout =
      evaluate(params, scaled_full, scaling, config.burn_in, train_weeks, data.weeks());
  report.gap = report.train.r2 - report.holdout.r2;

  // Contribution totals per channel over the full span.
  const ForwardTrace trace = forward(params, scaled_full, config.burn_in);
  const Contributions contributions =
      decompose_contributions(params, trace, scaling, scaled_full);
  double total_abs = 0.0;
  std::vector<double> totals(data.channels(), 0.0);
  for (int c = 0; c < data.channels(); ++c) {
    for (int r = 0; r < data.regions(); ++r) totals[c] += contributions.channel[r].col(c).sum();
    total_abs += std::abs(totals[c]);
  }
  for (int c = 0; c < data.channels(); ++c) {
    report.channel_summary.push_back(
        {data.channel_labels[c], totals[c], total_abs > 0.0 ? totals[c] / total_abs : 0.0});
  }

  TrainedModel out;
  out.params = std::move(params);
  out.scaling = scaling;
  out.config = config;
  out.report = std::move(report);
  out.region_labels = data.region_labels;
  out.channel_labels = data.channel_labels;
  out.control_labels = data.control_labels;
  return out;
}

std::string metrics_json(const FitReport& report) {
  json doc;
  doc["train_r2"] = report.train.r2;
  doc["holdout_r2"] = report.holdout.r2;
  doc["gap"] = report.gap;
  doc["train_rmse"] = report.train.rmse;
  doc["holdout_rmse"] = report.holdout.rmse;
  doc["train_relative_error"] = report.train.relative_error;
  doc["holdout_relative_error"] = report.holdout.relative_error;
  doc["seed"] = report.seed;
  doc["epochs"] = report.epochs;
  return doc.dump(2) + "\n";
}

namespace {

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

json config_to_json(const TrainConfig& c) {
  json doc;
  doc["epochs"] = c.epochs;
  doc["learning_rate"] = c.learning_rate;
  doc["huber_delta"] = c.huber.delta;
  doc["l1_coef"] = c.l1_coef;
  doc["l2_coef"] = c.l2_coef;
  doc["lambda_w"] = c.lambda_w;
  doc["lambda_dag_fit"] = c.lambda_dag_fit;
  doc["clip_norm"] = c.clip_norm;
  doc["burn_in"] = c.burn_in;
  doc["holdout_weeks"] = c.holdout_weeks;
  doc["seed"] = c.seed;
  doc["dual_update_interval"] = c.dual_update_interval;
  doc["hidden_size"] = c.hidden_size;
  doc["dag_threshold"] = c.dag_threshold;
  doc["learn_low"] = c.learn_low;
  return doc;
}

TrainConfig config_from_json(const json& doc) {
  TrainConfig c;
  c.epochs = doc.at("epochs").get<int>();
  c.learning_rate = doc.at("learning_rate").get<double>();
  c.huber.delta = doc.at("huber_delta").get<double>();
  c.l1_coef = doc.at("l1_coef").get<double>();
  c.l2_coef = doc.at("l2_coef").get<double>();
  c.lambda_w = doc.at("lambda_w").get<double>();
  c.lambda_dag_fit = doc.at("lambda_dag_fit").get<double>();
  c.clip_norm = doc.at("clip_norm").get<double>();
  c.burn_in = doc.at("burn_in").get<int>();
  c.holdout_weeks = doc.at("holdout_weeks").get<int>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.dual_update_interval = doc.at("dual_update_interval").get<int>();
  c.hidden_size = doc.at("hidden_size").get<int>();
  c.dag_threshold = doc.at("dag_threshold").get<double>();
  c.learn_low = doc.at("learn_low").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  const ModelDims dims = model.params.dims();
  json doc;
  doc["format"] = "mmmkit-checkpoint-v1";
  doc["dims"] = {{"regions", dims.regions},
                 {"channels", dims.channels},
                 {"controls", dims.controls},
                 {"hidden", dims.hidden}};
  doc["seed"] = model.params.seed;
  doc["params"] = vector_to_json(model.params.flatten());
  doc["dag"] = {{"alpha", model.params.dag.alpha},
                {"rho", model.params.dag.rho},
                {"threshold", model.params.dag.threshold}};
  if (std::isfinite(model.params.dag.last_h)) doc["dag"]["last_h"] = model.params.dag.last_h;
  doc["learn_low"] = model.params.head.learn_low;
  doc["config"] = config_to_json(model.config);
  doc["labels"] = {{"regions", model.region_labels},
                   {"channels", model.channel_labels},
                   {"controls", model.control_labels}};
  doc["scaling"] = {{"driver_scale", matrix_to_json(model.scaling.driver_scale)},
                    {"kpi_scale", vector_to_json(model.scaling.kpi_scale)},
                    {"control_center", vector_to_json(model.scaling.control_center)},
                    {"control_spread", vector_to_json(model.scaling.control_spread)}};

  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "save_checkpoint: cannot open " + path);
  file << doc.dump(2) << '\n';
  require(file.good(), ErrorCode::io, "save_checkpoint: write failed for " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream file(path);
  require(file.good(), ErrorCode::io, "load_checkpoint: cannot open " + path);
  json doc;
  try {
    file >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("load_checkpoint: ") + e.what());
  }
  require(doc.value("format", "") == "mmmkit-checkpoint-v1", ErrorCode::parse,
          "load_checkpoint: unrecognized checkpoint format");

  TrainedModel model;
  model.config = config_from_json(doc.at("config"));

  ModelDims dims;
  dims.regions = doc.at("dims").at("regions").get<int>();
  dims.channels = doc.at("dims").at("channels").get<int>();
  dims.controls = doc.at("dims").at("controls").get<int>();
  dims.hidden = doc.at("dims").at("hidden").get<int>();

  // Rebuild the parameter shapes, then overwrite with the stored vector.
  ModelParams params;
  params.gru.wz = Matrix::Zero(dims.hidden, dims.gru_input());
  params.gru.uz = Matrix::Zero(dims.hidden, dims.hidden);
  params.gru.bz = Vector::Zero(dims.hidden);
  params.gru.wr = params.gru.wz;
  params.gru.ur = params.gru.uz;
  params.gru.br = params.gru.bz;
  params.gru.wn = params.gru.wz;
  params.gru.un = params.gru.uz;
  params.gru.bn = params.gru.bz;
  params.head.projection = Matrix::Zero(dims.channels, dims.hidden);
  params.head.bias = Vector::Zero(dims.channels);
  params.head.low_raw = Vector::Zero(dims.channels);
  params.head.high_raw = Vector::Zero(dims.channels);
  params.head.learn_low = doc.at("learn_low").get<bool>();
  params.region.baseline = Vector::Zero(dims.regions);
  params.region.scale_raw = Vector::Zero(dims.regions);
  params.hill.assign(dims.channels, HillRaw{});
  params.dag = DagState::make(dims.channels, doc.at("dag").at("threshold").get<double>());
  params.dag.alpha = doc.at("dag").at("alpha").get<double>();
  params.dag.rho = doc.at("dag").at("rho").get<double>();
  if (doc.at("dag").contains("last_h")) params.dag.last_h = doc.at("dag").at("last_h").get<double>();
  params.control_coefs = Vector::Zero(dims.controls);
  params.seed = doc.at("seed").get<std::uint64_t>();
  params.set_flat(vector_from_json(doc.at("params")));
  model.params = std::move(params);

  model.region_labels = doc.at("labels").at("regions").get<std::vector<std::string>>();
  model.channel_labels = doc.at("labels").at("channels").get<std::vector<std::string>>();
  model.control_labels = doc.at("labels").at("controls").get<std::vector<std::string>>();

  model.scaling.driver_scale = matrix_from_json(doc.at("scaling").at("driver_scale"));
  model.scaling.kpi_scale = vector_from_json(doc.at("scaling").at("kpi_scale"));
  model.scaling.control_center = vector_from_json(doc.at("scaling").at("control_center"));
  model.scaling.control_spread = vector_from_json(doc.at("scaling").at("control_spread"));

  model.report.seed = model.config.seed;
  model.report.epochs = model.config.epochs;
  return model;
}

}  // namespace mmm
