#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmm/errors.hpp"
#include "mmm/report.hpp"
#include "mmm/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream file(path);
  REQUIRE(file.good());
  std::stringstream ss;
  ss << file.rdbuf();
  return ss.str();
}

struct RunFixture {
  mmm::PanelDataset data;
  mmm::TrainedModel model;
  fs::path dir;
};

// One small trained run shared by the artifact tests.
RunFixture make_run(const std::string& name, std::uint64_t seed) {
  mmm::SynthConfig sc;
  sc.seed = seed;
  sc.regions = 3;
  sc.weeks = 30;
  sc.channels = 2;
  sc.controls = 1;
  mmm::Matrix dag = mmm::Matrix::Zero(2, 2);
  dag(0, 1) = 0.6;
  sc.dag = dag;

  RunFixture fixture;
  fixture.data = mmm::generate_synthetic(sc).first;

  mmm::TrainConfig tc;
  tc.epochs = 120;
  tc.holdout_weeks = 5;
  tc.burn_in = 2;
  tc.hidden_size = 5;
  tc.dual_update_interval = 40;
  tc.seed = seed;
  fixture.model = mmm::train(fixture.data, tc);

  fixture.dir = fs::temp_directory_path() / name;
  fs::remove_all(fixture.dir);
  mmm::write_run_artifacts(fixture.model, fixture.data, fixture.dir.string());
  return fixture;
}

}  // namespace

TEST_SUITE_BEGIN("report");

TEST_CASE("fmt_double round trips doubles exactly") {
  mmm::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    const std::string text = mmm::fmt_double(x);
    CHECK(std::strtod(text.c_str(), nullptr) == x);
  }
}

TEST_CASE("run artifacts land on disk with the documented names") {
  const RunFixture run = make_run("mmm_report_run", 61);
  for (const char* name :
       {"metrics.json", "checkpoint.json", "dag_edges.csv", "contributions.csv", "curves.csv"}) {
    CHECK(fs::exists(run.dir / name));
  }
  const nlohmann::json metrics = nlohmann::json::parse(slurp(run.dir / "metrics.json"));
  CHECK(metrics.contains("train_r2"));
  CHECK(metrics.contains("holdout_r2"));
  CHECK(metrics["seed"].get<std::uint64_t>() == 61);
}

TEST_CASE("contribution rows mirror the decomposition additivity") {
  const RunFixture run = make_run("mmm_report_add", 62);
  std::ifstream file(run.dir / "contributions.csv");
  std::string line;
  std::getline(file, line);  // header
  int checked = 0;
  while (std::getline(file, line) && checked < 40) {
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 8);  // region, week, actual, predicted, baseline, 2 channels, 1 control
    const double predicted = std::strtod(cells[3].c_str(), nullptr);
    double total = std::strtod(cells[4].c_str(), nullptr);
    for (int i = 5; i < 8; ++i) total += std::strtod(cells[i].c_str(), nullptr);
    CHECK(std::abs(total - predicted) <= 1e-8 * std::max(1.0, std::abs(predicted)));
    ++checked;
  }
  CHECK(checked == 40);
}

TEST_CASE("report html is self-contained and echoes artifact values") {
  const RunFixture run = make_run("mmm_report_html", 63);
  mmm::write_report_html(run.dir.string());
  const std::string html = slurp(run.dir / "report.html");

  CHECK(html.find("http") == std::string::npos);
  CHECK(html.find("<svg") != std::string::npos);

  // Metric values re-serialized from the parsed document are identical to
  // the file's own text.
  const nlohmann::json metrics = nlohmann::json::parse(slurp(run.dir / "metrics.json"));
  CHECK(html.find(metrics["train_r2"].dump()) != std::string::npos);
  CHECK(html.find(metrics["holdout_rmse"].dump()) != std::string::npos);

  // Edge weights and curve parameters appear exactly as written in the CSVs.
  std::ifstream edges(run.dir / "dag_edges.csv");
  std::string line;
  std::getline(edges, line);
  if (std::getline(edges, line) && !line.empty()) {
    const std::string weight = line.substr(line.rfind(',') + 1);
    CHECK(html.find(weight) != std::string::npos);
  }
  std::ifstream curves(run.dir / "curves.csv");
  std::getline(curves, line);
  while (std::getline(curves, line)) {
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() >= 2 && !cells[1].empty()) {
      CHECK(html.find(cells[1]) != std::string::npos);  // slope string
    }
  }
}

TEST_CASE("report renders nodes even when no edges survive") {
  RunFixture run = make_run("mmm_report_noedge", 64);
  // Rewrite the edge artifact as header-only.
  std::ofstream edges(run.dir / "dag_edges.csv");
  edges << "source,target,weight\n";
  edges.close();
  mmm::write_report_html(run.dir.string());
  const std::string html = slurp(run.dir / "report.html");
  CHECK(html.find("<circle") != std::string::npos);       // nodes drawn
  CHECK(html.find("marker-end") == std::string::npos);    // no edges drawn
}

TEST_CASE("report on a missing run directory fails with a clear error") {
  CHECK_THROWS_AS(mmm::write_report_html("/nonexistent/run/dir"), mmm::Error);
}

TEST_CASE("curve charts annotate the half-saturation point") {
  const RunFixture run = make_run("mmm_report_halfsat", 65);
  const auto curves = mmm::fit_all_curves(run.model, run.data);
  const fs::path path = run.dir / "curves.html";
  mmm::write_curves_html(curves, path.string());
  const std::string html = slurp(path);
  CHECK(html.find("50% of max") != std::string::npos);
  CHECK(html.find("http") == std::string::npos);
  for (const auto& entry : curves) {
    if (entry.fitted) {
      CHECK(html.find(mmm::fmt_double(entry.curve.saturation)) != std::string::npos);
    }
  }
}

TEST_CASE("degenerate channels come back flagged rather than fatal") {
  RunFixture run = make_run("mmm_report_degen", 66);
  // Zero out one channel: no driver, no contribution, nothing to fit.
  for (int r = 0; r < run.data.regions(); ++r) run.data.drivers[r].col(1).setZero();
  const auto curves = mmm::fit_all_curves(run.model, run.data);
  REQUIRE(curves.size() == 2);
  CHECK(curves[0].fitted);
  CHECK(!curves[1].fitted);
  CHECK(curves[1].status == "degenerate");

  const fs::path path = run.dir / "curves2.csv";
  mmm::write_curves_csv(curves, path.string());
  const std::string text = slurp(path);
  CHECK(text.find("degenerate") != std::string::npos);
}

TEST_SUITE_END();
