#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mmmkit.h"

namespace fs = std::filesystem;

namespace {

struct Dataset {
  mmm_dataset* ptr = nullptr;
  ~Dataset() { mmm_dataset_free(ptr); }
};

struct Model {
  mmm_model* ptr = nullptr;
  ~Model() { mmm_model_free(ptr); }
};

struct Text {
  char* ptr = nullptr;
  ~Text() { mmm_string_free(ptr); }
};

mmm_synth_spec demo_spec(std::uint64_t seed) {
  mmm_synth_spec spec{};
  spec.seed = seed;
  spec.regions = 3;
  spec.weeks = 26;
  spec.channels = 2;
  spec.controls = 1;
  spec.noise_level = 0.05;
  return spec;
}

mmm_train_config quick_config(std::uint64_t seed) {
  mmm_train_config config;
  mmm_train_config_default(&config);
  config.epochs = 80;
  config.holdout_weeks = 4;
  config.burn_in = 2;
  config.hidden_size = 4;
  config.dual_update_interval = 30;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_SUITE_BEGIN("capi");

TEST_CASE("defaults mirror the documented configuration") {
  mmm_train_config config;
  mmm_train_config_default(&config);
  CHECK(config.epochs == 2000);
  CHECK(config.learning_rate == 0.01);
  CHECK(config.huber_delta == 1.0);
  CHECK(config.holdout_weeks == 8);
  CHECK(config.burn_in == 4);
  CHECK(config.hidden_size == 16);
  CHECK(config.dual_update_interval == 200);
  CHECK(config.clip_norm == 1.0);
}

TEST_CASE("synthetic datasets report their dimensions") {
  const mmm_synth_spec spec = demo_spec(5);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  CHECK(mmm_dataset_regions(data.ptr) == 3);
  CHECK(mmm_dataset_weeks(data.ptr) == 26);
  CHECK(mmm_dataset_channels(data.ptr) == 2);
  CHECK(mmm_dataset_controls(data.ptr) == 1);
}

TEST_CASE("csv write and load round trip through the boundary") {
  const mmm_synth_spec spec = demo_spec(6);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  const auto path = fs::temp_directory_path() / "capi_panel.csv";
  REQUIRE(mmm_dataset_write_csv(data.ptr, path.string().c_str()) == MMM_OK);

  Dataset back;
  REQUIRE(mmm_dataset_load_csv(path.string().c_str(), &back.ptr) == MMM_OK);
  CHECK(mmm_dataset_regions(back.ptr) == 3);
  CHECK(mmm_dataset_weeks(back.ptr) == 26);
}

TEST_CASE("missing files surface as io errors with a message") {
  Dataset data;
  CHECK(mmm_dataset_load_csv("/no/such/panel.csv", &data.ptr) == MMM_ERR_IO);
  CHECK(std::strlen(mmm_last_error()) > 0);
}

TEST_CASE("null arguments are rejected") {
  CHECK(mmm_dataset_load_csv(nullptr, nullptr) == MMM_ERR_INVALID_ARG);
  CHECK(mmm_train(nullptr, nullptr, nullptr) == MMM_ERR_INVALID_ARG);
  CHECK(mmm_write_report(nullptr) == MMM_ERR_INVALID_ARG);
}

TEST_CASE("training produces a parsable metrics document") {
  const mmm_synth_spec spec = demo_spec(7);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  const mmm_train_config config = quick_config(11);

  Model model;
  REQUIRE(mmm_train(data.ptr, &config, &model.ptr) == MMM_OK);
  Text metrics;
  REQUIRE(mmm_model_metrics_json(model.ptr, &metrics.ptr) == MMM_OK);
  const auto doc = nlohmann::json::parse(metrics.ptr);
  CHECK(doc["seed"].get<std::uint64_t>() == 11);
  CHECK(doc["epochs"].get<int>() == 80);
  CHECK(doc["train_r2"].is_number());
}

TEST_CASE("invalid configuration is rejected as invalid argument") {
  const mmm_synth_spec spec = demo_spec(8);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  mmm_train_config config = quick_config(1);
  config.holdout_weeks = 0;
  Model model;
  CHECK(mmm_train(data.ptr, &config, &model.ptr) == MMM_ERR_INVALID_ARG);
}

TEST_CASE("save and load preserve the reported metrics") {
  const mmm_synth_spec spec = demo_spec(9);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  const mmm_train_config config = quick_config(13);
  Model model;
  REQUIRE(mmm_train(data.ptr, &config, &model.ptr) == MMM_OK);

  const auto path = fs::temp_directory_path() / "capi_ckpt.json";
  REQUIRE(mmm_model_save(model.ptr, path.string().c_str()) == MMM_OK);
  Model restored;
  REQUIRE(mmm_model_load(path.string().c_str(), &restored.ptr) == MMM_OK);

  Text eval_a, eval_b;
  REQUIRE(mmm_model_evaluate(model.ptr, data.ptr, 0, &eval_a.ptr) == MMM_OK);
  REQUIRE(mmm_model_evaluate(restored.ptr, data.ptr, 0, &eval_b.ptr) == MMM_OK);
  CHECK(std::string(eval_a.ptr) == std::string(eval_b.ptr));
}

TEST_CASE("artifacts and report write through the boundary") {
  const mmm_synth_spec spec = demo_spec(10);
  Dataset data;
  REQUIRE(mmm_dataset_synthetic(&spec, &data.ptr) == MMM_OK);
  const mmm_train_config config = quick_config(17);
  Model model;
  REQUIRE(mmm_train(data.ptr, &config, &model.ptr) == MMM_OK);

  const auto dir = fs::temp_directory_path() / "capi_run";
  fs::remove_all(dir);
  REQUIRE(mmm_model_write_artifacts(model.ptr, data.ptr, dir.string().c_str()) == MMM_OK);
  REQUIRE(mmm_write_report(dir.string().c_str()) == MMM_OK);
  CHECK(fs::exists(dir / "report.html"));

  Text summary;
  REQUIRE(mmm_model_fit_curves(model.ptr, data.ptr, dir.string().c_str(), &summary.ptr) ==
          MMM_OK);
  CHECK(std::string(summary.ptr).find("slope") != std::string::npos);
  CHECK(fs::exists(dir / "curves.html"));
}

TEST_CASE("report on an empty directory is an io error") {
  const auto dir = fs::temp_directory_path() / "capi_empty_run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK(mmm_write_report(dir.string().c_str()) == MMM_ERR_IO);
}

TEST_CASE("raw xy points fit through the boundary") {
  const auto path = fs::temp_directory_path() / "capi_points.csv";
  {
    std::ofstream file(path);
    file << "x,y\n";
    for (int i = 1; i <= 16; ++i) {
      const double x = 100.0 * i;
      const double y = 80.0 * x * x / (x * x + 600.0 * 600.0);
      file << x << ',' << y << '\n';
    }
  }
  Text summary;
  REQUIRE(mmm_fit_curve_csv(path.string().c_str(), nullptr, &summary.ptr) == MMM_OK);
  const std::string text(summary.ptr);
  CHECK(text.find("slope") != std::string::npos);
  CHECK(text.find("saturation") != std::string::npos);
}

TEST_SUITE_END();
