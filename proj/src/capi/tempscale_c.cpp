#include "tempscale/tempscale.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "core/errors.hpp"
#include "core/experiment.hpp"
#include "core/gradcheck.hpp"
#include "core/json_util.hpp"
#include "core/model.hpp"
#include "core/trainer.hpp"

using namespace tempscale;

struct tsc_model {
  Model m;
};

struct tsc_dataset {
  SplitDataset d;
};

namespace {

thread_local std::string g_last_error;

tsc_status fail(tsc_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

tsc_status from_exception() {
  try {
    throw;
  } catch (const Error& e) {
    return fail(static_cast<tsc_status>(static_cast<int>(e.kind())), e.what());
  } catch (const std::exception& e) {
    return fail(TSC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TSC_ERR_INTERNAL, "unknown error");
  }
}

template <class Fn>
tsc_status guarded(Fn&& fn) {
  try {
    fn();
    return TSC_OK;
  } catch (...) {
    return from_exception();
  }
}

tsc_status require_arg(const void* p, const char* name) {
  if (p) return TSC_OK;
  return fail(TSC_ERR_CONFIG, std::string("null argument: ") + name);
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* tsc_version(void) { return "1.0.0"; }

const char* tsc_last_error(void) { return g_last_error.c_str(); }

tsc_status tsc_dataset_create(const char* spec_json, const char* cache_dir, tsc_dataset** out) {
  if (require_arg(spec_json, "spec_json") || require_arg(out, "out")) return TSC_ERR_CONFIG;
  return guarded([&] {
    auto ds = std::make_unique<tsc_dataset>();
    ds->d = dataset_from_json(parse_json(spec_json, "dataset spec"), opt(cache_dir));
    *out = ds.release();
  });
}

void tsc_dataset_free(tsc_dataset* ds) { delete ds; }

long tsc_dataset_train_size(const tsc_dataset* ds) { return ds ? static_cast<long>(ds->d.train.size()) : 0; }
long tsc_dataset_test_size(const tsc_dataset* ds) { return ds ? static_cast<long>(ds->d.test.size()) : 0; }
int tsc_dataset_classes(const tsc_dataset* ds) { return ds ? ds->d.train.classes : 0; }

tsc_status tsc_model_load(const char* path, tsc_model** out) {
  if (require_arg(path, "path") || require_arg(out, "out")) return TSC_ERR_CONFIG;
  return guarded([&] {
    auto m = std::make_unique<tsc_model>();
    m->m = load_model(path);
    *out = m.release();
  });
}

tsc_status tsc_model_save(const tsc_model* m, const char* path) {
  if (require_arg(m, "model") || require_arg(path, "path")) return TSC_ERR_CONFIG;
  return guarded([&] { save_model(m->m, path); });
}

void tsc_model_free(tsc_model* m) { delete m; }

tsc_status tsc_model_info(const tsc_model* m, char** out_json) {
  if (require_arg(m, "model") || require_arg(out_json, "out_json")) return TSC_ERR_CONFIG;
  return guarded([&] {
    json j;
    j["classes"] = m->m.classes;
    j["feature_dim"] = m->m.spec.feature_dim;
    j["encoder"] = encoder_kind_name(m->m.spec.kind);
    j["input_shape"] = m->m.spec.input_shape;
    j["tau"] = m->m.train_tau;
    j["seed"] = m->m.train_seed;
    j["epochs"] = m->m.train_epochs;
    j["dataset"] = m->m.dataset_id;
    *out_json = dup_string(j.dump());
  });
}

void tsc_string_free(char* s) { std::free(s); }

tsc_status tsc_model_evaluate(const tsc_model* m, const tsc_dataset* ds, double* accuracy, long* error_count,
                              double* mean_loss) {
  if (require_arg(m, "model") || require_arg(ds, "dataset")) return TSC_ERR_CONFIG;
  return guarded([&] {
    const EvalResult r = evaluate(m->m, ds->d.test);
    if (accuracy) *accuracy = r.accuracy;
    if (error_count) *error_count = r.error_count;
    if (mean_loss) *mean_loss = r.mean_loss;
  });
}

tsc_status tsc_train_run(const char* config_json, const char* cache_dir, const char* out_dir) {
  if (require_arg(config_json, "config_json") || require_arg(out_dir, "out_dir")) return TSC_ERR_CONFIG;
  return guarded([&] {
    ExperimentConfig cfg = experiment_config_from_json(parse_json(config_json, "experiment config"));
    cfg.cache_dir = opt(cache_dir);
    run_train(cfg, out_dir);
  });
}

tsc_status tsc_sweep_run(const char* config_json, const char* cache_dir, const char* out_dir) {
  if (require_arg(config_json, "config_json") || require_arg(out_dir, "out_dir")) return TSC_ERR_CONFIG;
  return guarded([&] {
    ExperimentConfig cfg = experiment_config_from_json(parse_json(config_json, "experiment config"));
    cfg.cache_dir = opt(cache_dir);
    run_sweep(cfg, out_dir);
  });
}

tsc_status tsc_attack_eval_run(const char* model_path, const char* dataset_json, const char* attack_json,
                               const char* cache_dir, const char* out_csv, double* robust_accuracy) {
  if (require_arg(model_path, "model_path")) return TSC_ERR_CONFIG;
  return guarded([&] {
    const double acc = run_attack_eval(model_path, opt(dataset_json), opt(attack_json), opt(cache_dir), opt(out_csv));
    if (robust_accuracy) *robust_accuracy = acc;
  });
}

tsc_status tsc_corrupt_eval_run(const char* model_path, const char* dataset_json, const char* corruption_json,
                                const char* cache_dir, const char* out_csv, double* mean_accuracy) {
  if (require_arg(model_path, "model_path")) return TSC_ERR_CONFIG;
  return guarded([&] {
    const double acc =
        run_corrupt_eval(model_path, opt(dataset_json), opt(corruption_json), opt(cache_dir), opt(out_csv));
    if (mean_accuracy) *mean_accuracy = acc;
  });
}

tsc_status tsc_analyze_run(const char* model_path, const char* dataset_json, const char* options_json,
                           const char* cache_dir, const char* out_dir) {
  if (require_arg(model_path, "model_path") || require_arg(out_dir, "out_dir")) return TSC_ERR_CONFIG;
  return guarded([&] { run_analyze(model_path, opt(dataset_json), opt(options_json), opt(cache_dir), out_dir); });
}

tsc_status tsc_grad_check_run(unsigned long long seed, int instances, char** out_report) {
  GradCheckReport rep;
  tsc_status st = guarded([&] { rep = run_grad_check(seed, instances > 0 ? instances : 200); });
  if (st != TSC_OK) return st;
  if (out_report) *out_report = dup_string(rep.summary());
  if (!rep.pass) return fail(TSC_ERR_INTERNAL, "gradient check failed: " + rep.summary());
  return TSC_OK;
}

}  // extern "C"
