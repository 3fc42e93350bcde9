// Exercises the shared-library surface exactly as an external client would:
// through tempscale/tempscale.h only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "tempscale/tempscale.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "version": 1,
  "master_seed": 3,
  "dataset": {"type": "blobs", "classes": 2, "dim": 8, "train_per_class": 25,
              "test_per_class": 10, "separation": 0.5, "noise": 0.05},
  "encoder": {"kind": "mlp", "hidden": [12], "feature_dim": 6},
  "train": {"epochs": 2, "batch_size": 16},
  "temperatures": [1]
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("capi_test_tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path.parent_path()); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("version and error strings exist") {
  CHECK(std::strlen(tsc_version()) > 0);
  CHECK(tsc_last_error() != nullptr);
}

TEST_CASE("dataset handles") {
  tsc_dataset* ds = nullptr;
  const char* spec = R"({"type":"blobs","classes":3,"dim":4,"train_per_class":5,
                         "test_per_class":2,"separation":0.3,"noise":0.01,"seed":1})";
  REQUIRE(tsc_dataset_create(spec, nullptr, &ds) == TSC_OK);
  CHECK(tsc_dataset_train_size(ds) == 15);
  CHECK(tsc_dataset_test_size(ds) == 6);
  CHECK(tsc_dataset_classes(ds) == 3);
  tsc_dataset_free(ds);

  tsc_dataset* bad = nullptr;
  CHECK(tsc_dataset_create("{not json", nullptr, &bad) == TSC_ERR_CONFIG);
  CHECK(std::strlen(tsc_last_error()) > 0);
  CHECK(tsc_dataset_create(R"({"type":"blobs","classes":2,"dim":4,"train_per_class":5,
                              "test_per_class":2,"separation":0.3,"noise":0.01,"zzz":1})",
                           nullptr, &bad) == TSC_ERR_CONFIG);
}

TEST_CASE("train, load, evaluate, attack, corrupt, analyze through the C surface") {
  TempDir dir("flow");
  REQUIRE(tsc_train_run(kTinyConfig, nullptr, dir.str().c_str()) == TSC_OK);
  const std::string model_path = dir.str() + "/model.json";

  tsc_model* m = nullptr;
  REQUIRE(tsc_model_load(model_path.c_str(), &m) == TSC_OK);

  char* info = nullptr;
  REQUIRE(tsc_model_info(m, &info) == TSC_OK);
  CHECK(std::string(info).find("\"classes\":2") != std::string::npos);
  tsc_string_free(info);

  tsc_dataset* ds = nullptr;
  const char* spec = R"({"type":"blobs","classes":2,"dim":8,"train_per_class":25,
                         "test_per_class":10,"separation":0.5,"noise":0.05,"seed":77})";
  REQUIRE(tsc_dataset_create(spec, nullptr, &ds) == TSC_OK);
  double acc = -1.0;
  long errors = -1;
  double loss = -1.0;
  REQUIRE(tsc_model_evaluate(m, ds, &acc, &errors, &loss) == TSC_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(errors >= 0);
  CHECK(loss >= 0.0);

  const std::string resaved = dir.str() + "/resaved.json";
  REQUIRE(tsc_model_save(m, resaved.c_str()) == TSC_OK);
  std::ifstream a(model_path, std::ios::binary), b(resaved, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  double robust = -1.0;
  REQUIRE(tsc_attack_eval_run(model_path.c_str(), nullptr, R"({"eps":0.03,"steps":2,"step_size":0.01})", nullptr,
                              nullptr, &robust) == TSC_OK);
  CHECK(robust >= 0.0);
  CHECK(robust <= 1.0);

  double mean_corr = -1.0;
  REQUIRE(tsc_corrupt_eval_run(model_path.c_str(), nullptr, R"({"severity":1})", nullptr, nullptr, &mean_corr) ==
          TSC_OK);
  CHECK(mean_corr >= 0.0);

  REQUIRE(tsc_analyze_run(model_path.c_str(), nullptr, nullptr, nullptr,
                          (dir.str() + "/analysis").c_str()) == TSC_OK);
  CHECK(fs::exists(dir.str() + "/analysis/features.csv"));

  tsc_dataset_free(ds);
  tsc_model_free(m);
}

TEST_CASE("sweep through the C surface") {
  TempDir dir("sweep");
  REQUIRE(tsc_sweep_run(kTinyConfig, nullptr, dir.str().c_str()) == TSC_OK);
  CHECK(fs::exists(dir.str() + "/summary.csv"));
  CHECK(fs::exists(dir.str() + "/manifest.json"));
  CHECK(fs::exists(dir.str() + "/tau_1/model.json"));
}

TEST_CASE("status codes by failure category") {
  CHECK(tsc_model_load("definitely_missing.json", nullptr) == TSC_ERR_CONFIG);  // null out pointer
  tsc_model* m = nullptr;
  CHECK(tsc_model_load("definitely_missing.json", &m) == TSC_ERR_IO);
  CHECK(tsc_train_run("{\"version\":1}", nullptr, "capi_never_created") == TSC_ERR_CONFIG);
  TempDir dir("div");
  const char* diverging = R"({
    "version": 1, "master_seed": 1,
    "dataset": {"type": "blobs", "classes": 2, "dim": 16, "train_per_class": 100,
                "test_per_class": 5, "separation": 0.5, "noise": 0.05, "seed": 3},
    "encoder": {"kind": "mlp", "hidden": [32, 16], "feature_dim": 8},
    "train": {"epochs": 20, "batch_size": 50, "lr_max": 1e100},
    "temperatures": [0.01]
  })";
  CHECK(tsc_train_run(diverging, nullptr, dir.str().c_str()) == TSC_ERR_DIVERGENCE);
}

TEST_CASE("grad check runs green through the C surface") {
  char* report = nullptr;
  REQUIRE(tsc_grad_check_run(7, 25, &report) == TSC_OK);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("PASS") != std::string::npos);
  tsc_string_free(report);
}
