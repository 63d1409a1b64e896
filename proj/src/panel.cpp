#include "mmm/panel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "mmm/dag.hpp"
#include "mmm/errors.hpp"
#include "mmm/rng.hpp"

namespace mmm {

void PanelDataset::validate() const {
  const int r = regions();
  const int t = weeks();
  const int c = channels();
  const int k = controls();
  require(static_cast<int>(drivers.size()) == r && static_cast<int>(controls_data.size()) == r &&
              static_cast<int>(kpi.size()) == r,
          ErrorCode::dimension, "panel: per-region array count does not match region count");
  for (int i = 0; i < r; ++i) {
    require(drivers[i].rows() == t && drivers[i].cols() == c, ErrorCode::dimension,
            "panel: driver block dimensions inconsistent");
    require(controls_data[i].rows() == t && controls_data[i].cols() == k, ErrorCode::dimension,
            "panel: control block dimensions inconsistent");
    require(kpi[i].size() == t, ErrorCode::dimension, "panel: kpi length inconsistent");
    require((drivers[i].array() >= 0.0).all(), ErrorCode::data, "panel: negative driver value");
    require((kpi[i].array() >= 0.0).all(), ErrorCode::data, "panel: negative kpi value");
    require(drivers[i].allFinite() && controls_data[i].allFinite() && kpi[i].allFinite(),
            ErrorCode::data, "panel: non-finite value");
  }
}

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

// Days since civil epoch for an ISO date; rejects impossible dates.
bool days_from_civil(int y, int m, int d, long& out) {
  static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m < 1 || m > 12 || d < 1) return false;
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  const int max_day = lengths[m - 1] + (m == 2 && leap ? 1 : 0);
  if (d > max_day) return false;
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  out = era * 146097 + static_cast<long>(doe) - 719468;
  return true;
}

// Week tokens are either plain integers or ISO-8601 dates; a panel must not
// mix the two. The returned key orders weeks.
struct WeekKey {
  bool is_date = false;
  long value = 0;
  bool operator<(const WeekKey& other) const { return value < other.value; }
  bool operator==(const WeekKey& other) const { return value == other.value; }
};

bool parse_week(const std::string& token, WeekKey& out) {
  if (token.empty()) return false;
  bool all_digits = true;
  const std::size_t start = token[0] == '-' ? 1 : 0;
  if (start == token.size()) return false;
  for (std::size_t i = start; i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) all_digits = false;
  }
  if (all_digits) {
    out.is_date = false;
    out.value = std::strtol(token.c_str(), nullptr, 10);
    return true;
  }
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(token.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) return false;
  out.is_date = true;
  return days_from_civil(y, m, d, out.value);
}

}  // namespace

PanelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream file(path);
  require(file.good(), ErrorCode::io, "load_csv: cannot open " + path);

  std::string line;
  require(static_cast<bool>(std::getline(file, line)), ErrorCode::parse,
          "load_csv: empty file " + path);
  const std::vector<std::string> header = split_csv_line(line);

  int region_col = -1, week_col = -1, kpi_col = -1;
  std::vector<int> channel_cols, control_cols;
  PanelDataset data;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const std::string& name = header[i];
    if (name == schema.region) {
      region_col = i;
    } else if (name == schema.week) {
      week_col = i;
    } else if (name == schema.kpi) {
      kpi_col = i;
    } else if (name.rfind(schema.channel_prefix, 0) == 0) {
      channel_cols.push_back(i);
      data.channel_labels.push_back(name.substr(schema.channel_prefix.size()));
    } else if (name.rfind(schema.control_prefix, 0) == 0) {
      control_cols.push_back(i);
      data.control_labels.push_back(name.substr(schema.control_prefix.size()));
    }
  }
  require(region_col >= 0, ErrorCode::data, "load_csv: missing column " + schema.region);
  require(week_col >= 0, ErrorCode::data, "load_csv: missing column " + schema.week);
  require(kpi_col >= 0, ErrorCode::data, "load_csv: missing column " + schema.kpi);
  require(!channel_cols.empty(), ErrorCode::data, "load_csv: no channel columns found");

  struct Row {
    std::vector<double> channels;
    std::vector<double> controls;
    double kpi = 0.0;
  };
  std::vector<std::string> region_order;
  std::map<std::string, std::map<WeekKey, Row>> rows;
  std::map<WeekKey, std::string> week_labels;
  bool saw_date = false, saw_int = false;

  long line_number = 1;
  while (std::getline(file, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    require(fields.size() >= header.size(), ErrorCode::parse,
            "load_csv: line " + std::to_string(line_number) + " has too few fields");

    const std::string region = fields[region_col];
    WeekKey week;
    require(parse_week(fields[week_col], week), ErrorCode::parse,
            "load_csv: unparseable week '" + fields[week_col] + "' on line " +
                std::to_string(line_number));
    (week.is_date ? saw_date : saw_int) = true;
    require(!(saw_date && saw_int), ErrorCode::parse,
            "load_csv: unparseable week column (mixes dates and integers)");

    Row row;
    const auto read_cell = [&](int col) {
      double value = 0.0;
      require(parse_number(fields[col], value), ErrorCode::parse,
              "load_csv: non-numeric value '" + fields[col] + "' on line " +
                  std::to_string(line_number));
      return value;
    };
    for (int col : channel_cols) {
      const double v = read_cell(col);
      require(v >= 0.0, ErrorCode::data,
              "load_csv: negative driver on line " + std::to_string(line_number));
      row.channels.push_back(v);
    }
    for (int col : control_cols) row.controls.push_back(read_cell(col));
    row.kpi = read_cell(kpi_col);
    require(row.kpi >= 0.0, ErrorCode::data,
            "load_csv: negative kpi on line " + std::to_string(line_number));

    if (rows.find(region) == rows.end()) region_order.push_back(region);
    auto [it, inserted] = rows[region].emplace(week, std::move(row));
    require(inserted, ErrorCode::data,
            "load_csv: non-rectangular panel (duplicate region-week cell on line " +
                std::to_string(line_number) + ")");
    week_labels[week] = fields[week_col];
  }
  require(!rows.empty(), ErrorCode::data, "load_csv: no data rows in " + path);

  // Rectangularity: every region must cover exactly the global week set.
  const std::size_t total_weeks = week_labels.size();
  for (const std::string& region : region_order) {
    require(rows[region].size() == total_weeks, ErrorCode::data,
            "load_csv: non-rectangular panel (region '" + region + "' is missing weeks)");
  }

  data.region_labels = region_order;
  for (const auto& [key, label] : week_labels) data.week_index.push_back(label);

  const int t = static_cast<int>(total_weeks);
  const int c = static_cast<int>(channel_cols.size());
  const int k = static_cast<int>(control_cols.size());
  for (const std::string& region : region_order) {
    Matrix driver_block(t, c);
    Matrix control_block(t, k);
    Vector kpi_series(t);
    int week_row = 0;
    for (const auto& [key, row] : rows[region]) {
      for (int j = 0; j < c; ++j) driver_block(week_row, j) = row.channels[j];
      for (int j = 0; j < k; ++j) control_block(week_row, j) = row.controls[j];
      kpi_series[week_row] = row.kpi;
      ++week_row;
    }
    data.drivers.push_back(std::move(driver_block));
    data.controls_data.push_back(std::move(control_block));
    data.kpi.push_back(std::move(kpi_series));
  }
  data.validate();
  return data;
}

void write_csv(const PanelDataset& data, const std::string& path, const CsvSchema& schema) {
  data.validate();
  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "write_csv: cannot open " + path);

  file << schema.region << ',' << schema.week << ',' << schema.kpi;
  for (const std::string& name : data.channel_labels) file << ',' << schema.channel_prefix << name;
  for (const std::string& name : data.control_labels) file << ',' << schema.control_prefix << name;
  file << '\n';

  char buffer[64];
  const auto emit = [&](double value) {
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    file << ',' << buffer;
  };
  for (int r = 0; r < data.regions(); ++r) {
    for (int t = 0; t < data.weeks(); ++t) {
      file << data.region_labels[r] << ',' << data.week_index[t];
      emit(data.kpi[r][t]);
      for (int c = 0; c < data.channels(); ++c) emit(data.drivers[r](t, c));
      for (int k = 0; k < data.controls(); ++k) emit(data.controls_data[r](t, k));
      file << '\n';
    }
  }
  require(file.good(), ErrorCode::io, "write_csv: write failed for " + path);
}

ScalingInfo fit_scaling(const PanelDataset& data) {
  data.validate();
  const int r = data.regions();
  const int c = data.channels();
  const int k = data.controls();

  ScalingInfo scaling;
  scaling.driver_scale = Matrix::Ones(r, c);
  scaling.kpi_scale = Vector::Ones(r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      const double peak = data.drivers[i].col(j).maxCoeff();
      if (peak > 0.0) scaling.driver_scale(i, j) = peak;
    }
    const double kpi_peak = data.kpi[i].maxCoeff();
    if (kpi_peak > 0.0) scaling.kpi_scale[i] = kpi_peak;
  }

  scaling.control_center = Vector::Zero(k);
  scaling.control_spread = Vector::Ones(k);
  const double count = static_cast<double>(r) * static_cast<double>(data.weeks());
  for (int j = 0; j < k; ++j) {
    double sum = 0.0;
    for (int i = 0; i < r; ++i) sum += data.controls_data[i].col(j).sum();
    const double mean = sum / count;
    double sq = 0.0;
    for (int i = 0; i < r; ++i) {
      sq += (data.controls_data[i].col(j).array() - mean).square().sum();
    }
    const double spread = std::sqrt(sq / count);
    scaling.control_center[j] = mean;
    if (spread > 0.0) scaling.control_spread[j] = spread;
  }
  return scaling;
}

namespace {

void check_scaling_dims(const PanelDataset& data, const ScalingInfo& scaling) {
  require(scaling.driver_scale.rows() == data.regions() &&
              scaling.driver_scale.cols() == data.channels() &&
              scaling.kpi_scale.size() == data.regions() &&
              scaling.control_center.size() == data.controls() &&
              scaling.control_spread.size() == data.controls(),
          ErrorCode::dimension, "scaling: dimension mismatch with panel");
  require((scaling.driver_scale.array() > 0.0).all() && (scaling.kpi_scale.array() > 0.0).all() &&
              (scaling.control_spread.array() > 0.0).all(),
          ErrorCode::invalid_argument, "scaling: divisors must be strictly positive");
}

}  // namespace

PanelDataset apply_scaling(const PanelDataset& data, const ScalingInfo& scaling) {
  check_scaling_dims(data, scaling);
  PanelDataset out = data;
  for (int r = 0; r < data.regions(); ++r) {
    for (int c = 0; c < data.channels(); ++c) out.drivers[r].col(c) /= scaling.driver_scale(r, c);
    out.kpi[r] /= scaling.kpi_scale[r];
    for (int k = 0; k < data.controls(); ++k) {
      out.controls_data[r].col(k) =
          (data.controls_data[r].col(k).array() - scaling.control_center[k]) /
          scaling.control_spread[k];
    }
  }
  return out;
}

PanelDataset invert_scaling(const PanelDataset& data, const ScalingInfo& scaling) {
  check_scaling_dims(data, scaling);
  PanelDataset out = data;
  for (int r = 0; r < data.regions(); ++r) {
    for (int c = 0; c < data.channels(); ++c) out.drivers[r].col(c) *= scaling.driver_scale(r, c);
    out.kpi[r] *= scaling.kpi_scale[r];
    for (int k = 0; k < data.controls(); ++k) {
      out.controls_data[r].col(k) =
          data.controls_data[r].col(k).array() * scaling.control_spread[k] +
          scaling.control_center[k];
    }
  }
  return out;
}

std::pair<PanelDataset, PanelDataset> temporal_split(const PanelDataset& data,
                                                     const SplitSpec& spec) {
  data.validate();
  require(spec.holdout_weeks >= 1, ErrorCode::invalid_argument,
          "temporal_split: holdout_weeks must be at least 1");
  require(spec.train_weeks >= 1, ErrorCode::invalid_argument,
          "temporal_split: train_weeks must be at least 1");
  require(spec.train_weeks + spec.holdout_weeks == data.weeks(), ErrorCode::invalid_argument,
          "temporal_split: train_weeks + holdout_weeks must equal total weeks");

  PanelDataset train;
  PanelDataset holdout;
  train.region_labels = holdout.region_labels = data.region_labels;
  train.channel_labels = holdout.channel_labels = data.channel_labels;
  train.control_labels = holdout.control_labels = data.control_labels;
  train.week_index.assign(data.week_index.begin(), data.week_index.begin() + spec.train_weeks);
  holdout.week_index.assign(data.week_index.begin() + spec.train_weeks, data.week_index.end());

  for (int r = 0; r < data.regions(); ++r) {
    train.drivers.push_back(data.drivers[r].topRows(spec.train_weeks));
    train.controls_data.push_back(data.controls_data[r].topRows(spec.train_weeks));
    train.kpi.push_back(data.kpi[r].head(spec.train_weeks));
    holdout.drivers.push_back(data.drivers[r].bottomRows(spec.holdout_weeks));
    holdout.controls_data.push_back(data.controls_data[r].bottomRows(spec.holdout_weeks));
    holdout.kpi.push_back(data.kpi[r].tail(spec.holdout_weeks));
  }
  return {std::move(train), std::move(holdout)};
}

Vector geometric_adstock(const Vector& series, double decay) {
  require(decay >= 0.0 && decay < 1.0, ErrorCode::invalid_argument,
          "geometric_adstock: decay must be in [0, 1)");
  Vector out(series.size());
  double carry = 0.0;
  for (Eigen::Index t = 0; t < series.size(); ++t) {
    carry = series[t] + decay * carry;
    out[t] = carry;
  }
  return out;
}

namespace {

// Topological order of the synthetic dependency matrix; throws when cyclic.
std::vector<int> topological_order(const Matrix& dag) {
  const int n = static_cast<int>(dag.rows());
  EdgeList edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && dag(i, j) != 0.0) edges.push_back({i, j, dag(i, j)});
    }
  }
  require(edges_acyclic(edges, n), ErrorCode::invalid_argument,
          "generate_synthetic: dependency matrix must be acyclic");

  std::vector<int> indegree(n, 0);
  for (const Edge& e : edges) indegree[e.target] += 1;
  std::vector<int> order;
  std::vector<int> ready;
  for (int i = n - 1; i >= 0; --i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    const int node = ready.back();
    ready.pop_back();
    order.push_back(node);
    for (const Edge& e : edges) {
      if (e.source == node && --indegree[e.target] == 0) ready.push_back(e.target);
    }
  }
  return order;
}

SynthConfig with_defaults(SynthConfig config) {
  const int c = config.channels;
  if (config.adstock_decays.empty()) {
    for (int i = 0; i < c; ++i) {
      config.adstock_decays.push_back(0.3 + 0.4 * (c > 1 ? static_cast<double>(i) / (c - 1) : 0.5));
    }
  }
  if (config.hill.empty()) {
    for (int i = 0; i < c; ++i) {
      config.hill.push_back({2.0 + 0.5 * (i % 4), 0.3 + 0.06 * (i % 5)});
    }
  }
  if (config.channel_coefs.empty()) {
    for (int i = 0; i < c; ++i) config.channel_coefs.push_back(80.0 * (1.0 + 0.25 * i));
  }
  if (config.control_coefs.empty()) {
    for (int i = 0; i < config.controls; ++i) config.control_coefs.push_back(15.0 * (i + 1));
  }
  if (config.dag.size() == 0) config.dag = Matrix::Zero(c, c);
  return config;
}

void validate_synth(const SynthConfig& config) {
  const auto bad = [&](const std::string& why) {
    fail(ErrorCode::invalid_argument, "generate_synthetic: " + why);
  };
  if (config.regions < 1 || config.weeks < 2 || config.channels < 1 || config.controls < 0)
    bad("counts out of range");
  if (static_cast<int>(config.adstock_decays.size()) != config.channels)
    bad("adstock_decays size mismatch");
  if (static_cast<int>(config.hill.size()) != config.channels) bad("hill size mismatch");
  if (static_cast<int>(config.channel_coefs.size()) != config.channels)
    bad("channel_coefs size mismatch");
  if (static_cast<int>(config.control_coefs.size()) != config.controls)
    bad("control_coefs size mismatch");
  if (config.dag.rows() != config.channels || config.dag.cols() != config.channels)
    bad("dag dimension mismatch");
  for (double d : config.adstock_decays) {
    if (d < 0.0 || d >= 1.0) bad("adstock decay outside [0, 1)");
  }
  for (const HillParams& h : config.hill) {
    if (!h.valid()) bad("invalid hill parameters");
  }
  if (config.noise_level < 0.0) bad("negative noise level");
  if (config.driver_amp_low <= 0.0 || config.driver_amp_high < config.driver_amp_low)
    bad("driver amplitude range invalid");
  if (config.baseline_low < 0.0 || config.baseline_high < config.baseline_low)
    bad("baseline range invalid");
}

}  // namespace

std::pair<PanelDataset, SynthTruth> generate_synthetic(const SynthConfig& raw_config) {
  const SynthConfig config = with_defaults(raw_config);
  validate_synth(config);

  const int regions = config.regions;
  const int weeks = config.weeks;
  const int channels = config.channels;
  const int controls = config.controls;
  const std::vector<int> order = topological_order(config.dag);

  Rng rng(config.seed);

  Vector channel_amp(channels);
  for (int c = 0; c < channels; ++c) {
    channel_amp[c] = rng.uniform(config.driver_amp_low, config.driver_amp_high);
  }
  Matrix region_amp(regions, channels);
  for (int r = 0; r < regions; ++r) {
    for (int c = 0; c < channels; ++c) region_amp(r, c) = rng.uniform(0.9, 1.1);
  }

  SynthTruth truth;
  truth.baselines = Vector(regions);
  truth.region_scales = Vector(regions);
  for (int r = 0; r < regions; ++r) {
    truth.baselines[r] = rng.uniform(config.baseline_low, config.baseline_high);
  }
  for (int r = 0; r < regions; ++r) {
    truth.region_scales[r] = rng.uniform(config.region_scale_low, config.region_scale_high);
  }

  PanelDataset data;
  for (int r = 0; r < regions; ++r) data.region_labels.push_back("R" + std::to_string(r));
  for (int t = 0; t < weeks; ++t) data.week_index.push_back(std::to_string(t));
  for (int c = 0; c < channels; ++c) data.channel_labels.push_back("ch" + std::to_string(c));
  for (int k = 0; k < controls; ++k) data.control_labels.push_back("x" + std::to_string(k));

  for (int r = 0; r < regions; ++r) {
    // Base driver activity: smoothed uniforms, strictly positive.
    Matrix base(weeks, channels);
    for (int c = 0; c < channels; ++c) {
      double smooth = 0.0;
      for (int t = 0; t < weeks; ++t) {
        const double u = rng.uniform();
        smooth = t == 0 ? u : 0.6 * smooth + 0.4 * u;
        base(t, c) = channel_amp[c] * region_amp(r, c) * (0.35 + 0.65 * smooth);
      }
    }

    // Channel dependencies propagate along the dependency matrix: parents
    // pass on their deviation from typical activity, so a heavy TV week
    // lifts dependent channels above their own baseline.
    Matrix driver = Matrix::Zero(weeks, channels);
    for (int c : order) {
      driver.col(c) = base.col(c);
      for (int p = 0; p < channels; ++p) {
        if (config.dag(p, c) != 0.0) {
          const double parent_mean = driver.col(p).mean();
          driver.col(c) += config.dag(p, c) * (driver.col(p).array() - parent_mean).matrix();
        }
      }
      driver.col(c) = driver.col(c).cwiseMax(0.0);
    }
    data.drivers.push_back(driver);

    Matrix control_block(weeks, controls);
    for (int k = 0; k < controls; ++k) {
      const double phase = 1.3 * k;
      for (int t = 0; t < weeks; ++t) {
        control_block(t, k) =
            std::sin(2.0 * 3.14159265358979323846 * t / 52.0 + phase) + 0.3 * rng.normal();
      }
    }
    data.controls_data.push_back(control_block);

    Matrix adstocked(weeks, channels);
    Matrix saturated(weeks, channels);
    for (int c = 0; c < channels; ++c) {
      adstocked.col(c) = geometric_adstock(driver.col(c), config.adstock_decays[c]);
      const double peak = adstocked.col(c).maxCoeff();
      for (int t = 0; t < weeks; ++t) {
        saturated(t, c) = hill(adstocked(t, c) / peak, config.hill[c]);
      }
    }

    Matrix mixed = saturated + saturated * config.dag;  // row-wise s + W^T s
    Matrix contribution(weeks, channels);
    Vector clean(weeks);
    for (int t = 0; t < weeks; ++t) {
      double effect = 0.0;
      for (int c = 0; c < channels; ++c) {
        contribution(t, c) = truth.region_scales[r] * config.channel_coefs[c] * mixed(t, c);
        effect += contribution(t, c);
      }
      double control_effect = 0.0;
      for (int k = 0; k < controls; ++k) {
        control_effect += config.control_coefs[k] * control_block(t, k);
      }
      clean[t] = truth.baselines[r] + effect + control_effect;
    }

    Vector observed = clean;
    if (config.noise_level > 0.0) {
      const double mean = clean.mean();
      const double sigma =
          config.noise_level * std::sqrt((clean.array() - mean).square().mean());
      for (int t = 0; t < weeks; ++t) observed[t] = std::max(0.0, clean[t] + sigma * rng.normal());
    }

    truth.adstocked.push_back(std::move(adstocked));
    truth.saturated.push_back(std::move(saturated));
    truth.mixed.push_back(std::move(mixed));
    truth.contributions.push_back(std::move(contribution));
    truth.clean_kpi.push_back(clean);
    data.kpi.push_back(std::move(observed));
  }

  data.validate();
  return {std::move(data), std::move(truth)};
}

}  // namespace mmm
