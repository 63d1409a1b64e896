#include "mmm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mmm/errors.hpp"
#include "mmm/saturation.hpp"

namespace mmm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0.0 ? "inf" : "-inf";
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::vector<ChannelCurve> fit_all_curves(const TrainedModel& model, const PanelDataset& data) {
  const PanelDataset scaled = apply_scaling(data, model.scaling);
  const ForwardTrace trace = forward(model.params, scaled, model.config.burn_in);
  const Contributions contributions =
      decompose_contributions(model.params, trace, model.scaling, scaled);

  std::vector<ChannelCurve> out;
  for (int c = 0; c < data.channels(); ++c) {
    ChannelCurve entry;
    entry.channel = data.channel_labels[c];
    entry.data.level = "Overall";
    for (int t = 0; t < data.weeks(); ++t) {
      double x = 0.0, y = 0.0;
      for (int r = 0; r < data.regions(); ++r) {
        x += data.drivers[r](t, c);
        y += contributions.channel[r](t, c);
      }
      entry.data.points.push_back({x, y});
    }
    try {
      entry.curve = fit_curve(entry.data);
      entry.fitted = true;
      entry.status = entry.curve.converged ? "ok" : "no_convergence";
    } catch (const Error& e) {
      // Constant responses and all-zero or single-level drivers both mean
      // there is no curve to fit for this channel.
      if (e.code() != ErrorCode::degenerate && e.code() != ErrorCode::invalid_argument) throw;
      entry.fitted = false;
      entry.status = "degenerate";
    }
    out.push_back(std::move(entry));
  }
  return out;
}

void write_metrics_file(const FitReport& report, const std::string& path) {
  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "cannot open " + path);
  file << metrics_json(report);
  require(file.good(), ErrorCode::io, "write failed for " + path);
}

void write_edges_csv(const EdgeList& edges, const std::vector<std::string>& channel_labels,
                     const std::string& path) {
  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "cannot open " + path);
  file << "source,target,weight\n";
  for (const Edge& e : edges) {
    file << channel_labels.at(e.source) << ',' << channel_labels.at(e.target) << ','
         << fmt_double(e.weight) << '\n';
  }
  require(file.good(), ErrorCode::io, "write failed for " + path);
}

void write_contributions_csv(const TrainedModel& model, const PanelDataset& data,
                             const std::string& path) {
  const PanelDataset scaled = apply_scaling(data, model.scaling);
  const ForwardTrace trace = forward(model.params, scaled, model.config.burn_in);
  const Contributions contributions =
      decompose_contributions(model.params, trace, model.scaling, scaled);

  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "cannot open " + path);
  file << "region,week,actual,predicted,baseline";
  for (const std::string& name : data.channel_labels) file << ",channel_" << name;
  for (const std::string& name : data.control_labels) file << ",control_" << name;
  file << '\n';
  for (int r = 0; r < data.regions(); ++r) {
    for (int t = 0; t < data.weeks(); ++t) {
      file << data.region_labels[r] << ',' << data.week_index[t] << ','
           << fmt_double(data.kpi[r][t]) << ',' << fmt_double(contributions.prediction[r][t])
           << ',' << fmt_double(contributions.baseline[r]);
      for (int c = 0; c < data.channels(); ++c) {
        file << ',' << fmt_double(contributions.channel[r](t, c));
      }
      for (int k = 0; k < data.controls(); ++k) {
        file << ',' << fmt_double(contributions.control[r](t, k));
      }
      file << '\n';
    }
  }
  require(file.good(), ErrorCode::io, "write failed for " + path);
}

void write_curves_csv(const std::vector<ChannelCurve>& curves, const std::string& path) {
  std::ofstream file(path);
  require(file.good(), ErrorCode::io, "cannot open " + path);
  file << "channel,slope,saturation,ceiling,r2,status\n";
  for (const ChannelCurve& entry : curves) {
    if (entry.fitted) {
      file << entry.channel << ',' << fmt_double(entry.curve.slope) << ','
           << fmt_double(entry.curve.saturation) << ',' << fmt_double(entry.curve.ceiling) << ','
           << fmt_double(entry.curve.r2) << ',' << entry.status << '\n';
    } else {
      file << entry.channel << ",,,,," << entry.status << '\n';
    }
  }
  require(file.good(), ErrorCode::io, "write failed for " + path);
}

void write_run_artifacts(const TrainedModel& model, const PanelDataset& data,
                         const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_metrics_file(model.report, (dir / "metrics.json").string());
  save_checkpoint(model, (dir / "checkpoint.json").string());
  write_edges_csv(model.report.edges, model.channel_labels, (dir / "dag_edges.csv").string());
  write_contributions_csv(model, data, (dir / "contributions.csv").string());
  write_curves_csv(fit_all_curves(model, data), (dir / "curves.csv").string());
}

// ---------------------------------------------------------------------------
// SVG helpers. Charts use a fixed 960x540 viewBox; geometry coordinates are
// presentation-only and rounded, while every displayed value is the exact
// artifact string.
// ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 540.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 30.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

std::string coord(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", v);
  return buffer;
}

std::string escape_html(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct PlotScale {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  double x(double v) const {
    return kMarginLeft + (v - x_min) / (x_max - x_min) * (kWidth - kMarginLeft - kMarginRight);
  }
  double y(double v) const {
    return kHeight - kMarginBottom -
           (v - y_min) / (y_max - y_min) * (kHeight - kMarginTop - kMarginBottom);
  }
};

// Inline SVG inherits the namespace from the HTML parser, so the markup can
// stay free of external references entirely.
void svg_open(std::ostream& out) {
  out << "<svg viewBox=\"0 0 960 540\" width=\"960\" height=\"540\" role=\"img\">\n";
}

void svg_axes(std::ostream& out, const PlotScale& s, const std::string& x_label,
              const std::string& y_label) {
  out << "<rect x=\"" << coord(kMarginLeft) << "\" y=\"" << coord(kMarginTop) << "\" width=\""
      << coord(kWidth - kMarginLeft - kMarginRight) << "\" height=\""
      << coord(kHeight - kMarginTop - kMarginBottom)
      << "\" fill=\"none\" stroke=\"#999\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << coord(kWidth / 2) << "\" y=\"" << coord(kHeight - 12)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << escape_html(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << coord(kHeight / 2)
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << coord(kHeight / 2) << ")\">" << escape_html(y_label) << "</text>\n";
  out << "<text x=\"" << coord(kMarginLeft) << "\" y=\"" << coord(kHeight - kMarginBottom + 18)
      << "\" font-size=\"11\" fill=\"#555\">" << fmt_double(s.x_min) << "</text>\n";
  out << "<text x=\"" << coord(kWidth - kMarginRight) << "\" y=\""
      << coord(kHeight - kMarginBottom + 18)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">" << fmt_double(s.x_max)
      << "</text>\n";
  out << "<text x=\"" << coord(kMarginLeft - 6) << "\" y=\"" << coord(kHeight - kMarginBottom)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">" << fmt_double(s.y_min)
      << "</text>\n";
  out << "<text x=\"" << coord(kMarginLeft - 6) << "\" y=\"" << coord(kMarginTop + 4)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">" << fmt_double(s.y_max)
      << "</text>\n";
}

void svg_polyline(std::ostream& out, const PlotScale& s, const std::vector<double>& xs,
                  const std::vector<double>& ys, const std::string& color, double width) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << coord(width)
      << "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out << ' ';
    out << coord(s.x(xs[i])) << ',' << coord(s.y(ys[i]));
  }
  out << "\"/>\n";
}

// Fitted Hill chart with the half-saturation annotation; observed points are
// optional (the run report only has the fitted parameters at hand).
void svg_hill_chart(std::ostream& out, double slope, double saturation, double ceiling,
                    const std::string& saturation_text, const std::string& half_text,
                    const std::vector<CurvePoint>& observed) {
  double x_max = 4.0 * saturation;
  for (const CurvePoint& p : observed) x_max = std::max(x_max, p.x);
  double y_max = ceiling;
  for (const CurvePoint& p : observed) y_max = std::max(y_max, p.y);
  if (y_max <= 0.0) y_max = 1.0;

  PlotScale s{0.0, x_max * 1.02, 0.0, y_max * 1.08};
  svg_open(out);
  svg_axes(out, s, "driver level", "response");

  std::vector<double> xs, ys;
  const HillParams hp{slope, saturation};
  for (int i = 0; i <= 200; ++i) {
    const double x = x_max * i / 200.0;
    xs.push_back(x);
    ys.push_back(ceiling * hill(x, hp));
  }
  svg_polyline(out, s, xs, ys, "#1f77b4", 2.5);

  for (const CurvePoint& p : observed) {
    out << "<circle cx=\"" << coord(s.x(p.x)) << "\" cy=\"" << coord(s.y(p.y))
        << "\" r=\"2.5\" fill=\"#d62728\" fill-opacity=\"0.6\"/>\n";
  }

  // Half-saturation guides: dashed drop lines meeting at (g, M/2).
  const double gx = s.x(saturation);
  const double gy = s.y(ceiling / 2.0);
  out << "<line x1=\"" << coord(gx) << "\" y1=\"" << coord(s.y(0.0)) << "\" x2=\"" << coord(gx)
      << "\" y2=\"" << coord(gy)
      << "\" stroke=\"#555\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
  out << "<line x1=\"" << coord(s.x(0.0)) << "\" y1=\"" << coord(gy) << "\" x2=\"" << coord(gx)
      << "\" y2=\"" << coord(gy)
      << "\" stroke=\"#555\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
  out << "<circle cx=\"" << coord(gx) << "\" cy=\"" << coord(gy)
      << "\" r=\"4\" fill=\"#ff7f0e\"/>\n";
  out << "<text x=\"" << coord(gx + 8) << "\" y=\"" << coord(gy - 8)
      << "\" font-size=\"13\">50% of max (" << half_text << ") at " << saturation_text
      << "</text>\n";
  out << "</svg>\n";
}

struct EdgeRow {
  std::string source, target, weight_text;
  double weight = 0.0;
};

void svg_dag_chart(std::ostream& out, const std::vector<std::string>& nodes,
                   const std::vector<EdgeRow>& edges) {
  svg_open(out);
  const double cx = kWidth / 2.0, cy = kHeight / 2.0;
  const double radius = std::min(kWidth, kHeight) / 2.0 - 70.0;
  const double node_r = 26.0;
  const int n = static_cast<int>(nodes.size());

  std::vector<double> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * 3.14159265358979323846 * i / std::max(1, n) - 1.5707963267948966;
    px[i] = cx + radius * std::cos(angle);
    py[i] = cy + radius * std::sin(angle);
  }

  out << "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" "
         "markerWidth=\"7\" markerHeight=\"7\" orient=\"auto-start-reverse\">"
         "<path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#444\"/></marker></defs>\n";

  double max_weight = 0.0;
  for (const EdgeRow& e : edges) max_weight = std::max(max_weight, std::abs(e.weight));
  const auto node_index = [&](const std::string& name) {
    for (int i = 0; i < n; ++i) {
      if (nodes[i] == name) return i;
    }
    return -1;
  };

  for (const EdgeRow& e : edges) {
    const int a = node_index(e.source);
    const int b = node_index(e.target);
    if (a < 0 || b < 0 || a == b) continue;
    const double dx = px[b] - px[a], dy = py[b] - py[a];
    const double len = std::hypot(dx, dy);
    const double ux = dx / len, uy = dy / len;
    const double x1 = px[a] + ux * node_r, y1 = py[a] + uy * node_r;
    const double x2 = px[b] - ux * (node_r + 6.0), y2 = py[b] - uy * (node_r + 6.0);
    const double width = 1.0 + (max_weight > 0.0 ? 4.0 * std::abs(e.weight) / max_weight : 0.0);
    out << "<line x1=\"" << coord(x1) << "\" y1=\"" << coord(y1) << "\" x2=\"" << coord(x2)
        << "\" y2=\"" << coord(y2) << "\" stroke=\"#444\" stroke-width=\"" << coord(width)
        << "\" marker-end=\"url(#arrow)\"><title>" << escape_html(e.source) << " -&gt; "
        << escape_html(e.target) << ": " << e.weight_text << "</title></line>\n";
    out << "<text x=\"" << coord((x1 + x2) / 2.0 + 6.0) << "\" y=\""
        << coord((y1 + y2) / 2.0 - 6.0) << "\" font-size=\"11\" fill=\"#333\">" << e.weight_text
        << "</text>\n";
  }

  for (int i = 0; i < n; ++i) {
    out << "<circle cx=\"" << coord(px[i]) << "\" cy=\"" << coord(py[i]) << "\" r=\""
        << coord(node_r) << "\" fill=\"#e8f0fe\" stroke=\"#1a56b0\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << coord(px[i]) << "\" y=\"" << coord(py[i] + 4)
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_html(nodes[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

const char* kHtmlStyle =
    "body{font-family:sans-serif;margin:24px;color:#222;max-width:1020px}"
    "h1{font-size:22px}h2{font-size:17px;margin-top:32px}"
    "table{border-collapse:collapse;margin:12px 0}"
    "td,th{border:1px solid #bbb;padding:4px 10px;font-size:13px;text-align:right}"
    "th{background:#eef;text-align:center}td:first-child{text-align:left}"
    "svg{background:#fcfcfc;border:1px solid #ddd;margin:8px 0}";

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream file(path);
  require(file.good(), ErrorCode::io, "missing run artifact: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(file, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  require(!rows.empty(), ErrorCode::io, "empty run artifact: " + path);
  return rows;
}

double to_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

}  // namespace

void write_curves_html(const std::vector<ChannelCurve>& curves, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot open " + path);

  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
      << "<title>Response curves</title><style>" << kHtmlStyle << "</style></head><body>\n";
  out << "<h1>Response curves</h1>\n";
  for (const ChannelCurve& entry : curves) {
    out << "<h2>Channel " << escape_html(entry.channel) << "</h2>\n";
    if (!entry.fitted) {
      out << "<p>No curve fitted: " << escape_html(entry.status) << ".</p>\n";
      continue;
    }
    const auto [sat_x, half] = saturation_point(entry.curve);
    out << "<p>slope " << fmt_double(entry.curve.slope) << ", saturation " << fmt_double(sat_x)
        << ", ceiling " << fmt_double(entry.curve.ceiling) << ", r2 "
        << fmt_double(entry.curve.r2) << " (" << entry.status << ")</p>\n";
    svg_hill_chart(out, entry.curve.slope, entry.curve.saturation, entry.curve.ceiling,
                   fmt_double(sat_x), fmt_double(half), entry.data.points);
  }
  out << "</body></html>\n";
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

void write_report_html(const std::string& run_dir, const ReportOptions& options) {
  const fs::path dir(run_dir);

  std::ifstream metrics_file(dir / "metrics.json");
  require(metrics_file.good(), ErrorCode::io,
          "missing run artifact: " + (dir / "metrics.json").string());
  json metrics;
  try {
    metrics_file >> metrics;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("report: bad metrics.json: ") + e.what());
  }

  const auto edges_rows = read_csv_rows((dir / "dag_edges.csv").string());
  const auto contrib_rows = read_csv_rows((dir / "contributions.csv").string());
  const auto curve_rows = read_csv_rows((dir / "curves.csv").string());

  // Channel names come from the contributions header; the edge list alone
  // cannot name isolated nodes.
  std::vector<std::string> channels;
  for (const std::string& column : contrib_rows[0]) {
    if (column.rfind("channel_", 0) == 0) channels.push_back(column.substr(8));
  }

  std::vector<EdgeRow> edges;
  for (std::size_t i = 1; i < edges_rows.size(); ++i) {
    const auto& row = edges_rows[i];
    if (row.size() < 3) continue;
    edges.push_back({row[0], row[1], row[2], to_double(row[2])});
  }

  // Weekly totals across regions for the fit chart.
  std::vector<std::string> week_order;
  std::vector<double> actual_total, predicted_total;
  {
    std::size_t cursor = 0;
    std::map<std::string, std::size_t> week_slot;
    for (std::size_t i = 1; i < contrib_rows.size(); ++i) {
      const std::string& week = contrib_rows[i][1];
      auto it = week_slot.find(week);
      if (it == week_slot.end()) {
        it = week_slot.emplace(week, cursor++).first;
        week_order.push_back(week);
        actual_total.push_back(0.0);
        predicted_total.push_back(0.0);
      }
      actual_total[it->second] += to_double(contrib_rows[i][2]);
      predicted_total[it->second] += to_double(contrib_rows[i][3]);
    }
  }

  std::ofstream out(dir / "report.html");
  require(out.good(), ErrorCode::io, "cannot open " + (dir / "report.html").string());
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
      << "<title>Marketing mix report</title><style>" << kHtmlStyle << "</style></head><body>\n";
  out << "<h1>Marketing mix report</h1>\n";

  out << "<h2>Fit metrics</h2>\n<table><tr><th>metric</th><th>value</th></tr>\n";
  for (const auto& [key, value] : metrics.items()) {
    out << "<tr><td>" << escape_html(key) << "</td><td>" << value.dump() << "</td></tr>\n";
  }
  out << "</table>\n";

  out << "<h2>Actual vs predicted (all regions, weekly totals)</h2>\n";
  {
    double y_max = 0.0;
    for (double v : actual_total) y_max = std::max(y_max, v);
    for (double v : predicted_total) y_max = std::max(y_max, v);
    if (y_max <= 0.0) y_max = 1.0;
    PlotScale s{0.0, static_cast<double>(std::max<std::size_t>(1, week_order.size() - 1)), 0.0,
                y_max * 1.08};
    svg_open(out);
    svg_axes(out, s, "week index", "KPI");
    std::vector<double> xs(week_order.size());
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
    svg_polyline(out, s, xs, actual_total, "#d62728", 2.0);
    svg_polyline(out, s, xs, predicted_total, "#1f77b4", 2.0);
    out << "<rect x=\"96\" y=\"52\" width=\"14\" height=\"4\" fill=\"#d62728\"/>"
        << "<text x=\"116\" y=\"58\" font-size=\"12\">actual</text>"
        << "<rect x=\"96\" y=\"70\" width=\"14\" height=\"4\" fill=\"#1f77b4\"/>"
        << "<text x=\"116\" y=\"76\" font-size=\"12\">predicted</text>\n";
    out << "</svg>\n";
  }

  if (options.include_dag) {
    out << "<h2>Channel dependency graph</h2>\n";
    svg_dag_chart(out, channels, edges);
    out << "<table><tr><th>source</th><th>target</th><th>weight</th></tr>\n";
    for (const EdgeRow& e : edges) {
      out << "<tr><td>" << escape_html(e.source) << "</td><td>" << escape_html(e.target)
          << "</td><td>" << e.weight_text << "</td></tr>\n";
    }
    out << "</table>\n";
  }

  if (options.include_curves) {
    out << "<h2>Response curves</h2>\n";
    out << "<table><tr>";
    for (const std::string& head : curve_rows[0]) out << "<th>" << escape_html(head) << "</th>";
    out << "</tr>\n";
    for (std::size_t i = 1; i < curve_rows.size(); ++i) {
      out << "<tr>";
      for (const std::string& cell : curve_rows[i]) out << "<td>" << escape_html(cell) << "</td>";
      out << "</tr>\n";
    }
    out << "</table>\n";
    for (std::size_t i = 1; i < curve_rows.size(); ++i) {
      const auto& row = curve_rows[i];
      if (row.size() < 6 || row[1].empty()) continue;
      out << "<h3>Channel " << escape_html(row[0]) << "</h3>\n";
      const double slope = to_double(row[1]);
      const double saturation = to_double(row[2]);
      const double ceiling = to_double(row[3]);
      svg_hill_chart(out, slope, saturation, ceiling, row[2], fmt_double(ceiling / 2.0), {});
    }
  }

  out << "</body></html>\n";
  require(out.good(), ErrorCode::io, "write failed for report.html");
}

}  // namespace mmm
