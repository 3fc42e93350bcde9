// Command-line front end. Everything substantive happens behind the C API in
// libtempscale; this file only parses flags, assembles JSON option strings
// and maps status codes to exit codes.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tempscale/tempscale.h"

namespace {

using nlohmann::json;

int report(tsc_status st) {
  if (st != TSC_OK) std::cerr << "error: " << tsc_last_error() << "\n";
  return static_cast<int>(st);
}

std::string read_file_or_die(const std::string& path, int& rc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open '" << path << "'\n";
    rc = static_cast<int>(TSC_ERR_IO);
    return {};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  rc = 0;
  return ss.str();
}

std::string cache_dir_flag;

const char* cache_dir() {
  if (!cache_dir_flag.empty()) return cache_dir_flag.c_str();
  return std::getenv("TEMPSCALE_CACHE");
}

struct ConfigOverrides {
  std::optional<unsigned long long> seed;
  std::optional<double> tau;
};

// --seed replaces the master seed, --tau narrows the temperature list.
std::string apply_overrides(const std::string& text, const ConfigOverrides& ov, int& rc) {
  rc = 0;
  if (!ov.seed && !ov.tau) return text;
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    std::cerr << "error: config is not valid JSON\n";
    rc = static_cast<int>(TSC_ERR_CONFIG);
    return {};
  }
  if (ov.seed) j["master_seed"] = *ov.seed;
  if (ov.tau) j["temperatures"] = json::array({*ov.tau});
  return j.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temperature-scaled softmax classification harness"};
  app.require_subcommand(1);
  app.add_option("--cache", cache_dir_flag, "dataset cache directory (default: $TEMPSCALE_CACHE)");

  // train / sweep
  std::string config_path, out_dir, model_path, dataset_path, out_csv;
  ConfigOverrides ov;
  unsigned long long seed_flag = 0;
  double tau_flag = 0.0;

  auto add_config_cmds = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option_function<unsigned long long>(
        "--seed", [&](unsigned long long v) { ov.seed = v; }, "override master seed");
  };

  CLI::App* train = app.add_subcommand("train", "train one model from a config");
  add_config_cmds(train);
  train->add_option_function<double>(
      "--tau", [&](double v) { ov.tau = v; }, "override training temperature");

  CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate across the configured temperature grid");
  add_config_cmds(sweep);

  // attack-eval
  CLI::App* attack = app.add_subcommand("attack-eval", "robust accuracy under an l-inf attack");
  attack->add_option("--model", model_path, "model file")->required();
  attack->add_option("--dataset", dataset_path, "dataset spec JSON file (default: the model's)");
  attack->add_option("--out", out_csv, "per-sample results CSV");
  std::string loss = "ce", target = "";
  double eps = 8.0 / 255.0, step_size = 0.0;
  int steps = 20;
  bool no_random_start = false, targeted = false;
  attack->add_option("--loss", loss, "ce | cw-margin | dlr");
  attack->add_option("--eps", eps, "l-inf radius (sample units)");
  attack->add_option("--steps", steps, "attack iterations");
  attack->add_option("--step-size", step_size, "per-step size (default eps/4)");
  attack->add_flag("--no-random-start", no_random_start, "start exactly at the input");
  attack->add_flag("--targeted", targeted, "targeted attack");
  attack->add_option("--target", target, "target class index, or 'error-prone'");
  attack->add_option("--seed", seed_flag, "attack seed");

  // corrupt-eval
  CLI::App* corrupt = app.add_subcommand("corrupt-eval", "accuracy under synthetic corruptions");
  corrupt->add_option("--model", model_path, "model file")->required();
  corrupt->add_option("--dataset", dataset_path, "dataset spec JSON file (default: the model's)");
  corrupt->add_option("--out", out_csv, "per-kind results CSV");
  int severity = 3;
  std::vector<std::string> kinds;
  corrupt->add_option("--severity", severity, "severity level 1..5 (default 3)");
  corrupt->add_option("--kinds", kinds, "corruption kinds (default: all valid for the data)")->delimiter(',');
  corrupt->add_option("--seed", seed_flag, "corruption seed");

  // analyze
  CLI::App* analyze = app.add_subcommand("analyze", "prototype geometry, variance and logit-shift exports");
  analyze->add_option("--model", model_path, "model file")->required();
  analyze->add_option("--dataset", dataset_path, "dataset spec JSON file (default: the model's)");
  analyze->add_option("--out", out_dir, "output directory")->required();
  analyze->add_option("--eps", eps, "attack radius for the logit-shift table");
  analyze->add_option("--steps", steps, "attack iterations");
  analyze->add_option("--seed", seed_flag, "attack seed");

  // grad-check
  CLI::App* gradcheck = app.add_subcommand("grad-check", "closed-form vs autodiff vs finite-difference oracle suite");
  int instances = 200;
  gradcheck->add_option("--seed", seed_flag, "suite seed");
  gradcheck->add_option("--instances", instances, "number of random instances");

  CLI11_PARSE(app, argc, argv);

  int rc = 0;
  std::string dataset_json;
  if (!dataset_path.empty()) {
    dataset_json = read_file_or_die(dataset_path, rc);
    if (rc) return rc;
  }

  if (train->parsed() || sweep->parsed()) {
    std::string cfg = read_file_or_die(config_path, rc);
    if (rc) return rc;
    cfg = apply_overrides(cfg, ov, rc);
    if (rc) return rc;
    const tsc_status st = train->parsed() ? tsc_train_run(cfg.c_str(), cache_dir(), out_dir.c_str())
                                          : tsc_sweep_run(cfg.c_str(), cache_dir(), out_dir.c_str());
    if (st == TSC_OK) std::cout << "wrote " << out_dir << "\n";
    return report(st);
  }

  if (attack->parsed()) {
    json a;
    a["loss"] = loss;
    a["eps"] = eps;
    a["steps"] = steps;
    a["step_size"] = step_size > 0.0 ? step_size : (eps > 0.0 ? eps / 4.0 : 2.0 / 255.0);
    a["random_start"] = !no_random_start;
    a["seed"] = seed_flag;
    if (targeted) {
      a["targeted"] = true;
      if (target.empty() || target == "error-prone") {
        a["target"] = "error-prone";
      } else {
        a["target"] = std::stoi(target);
      }
    }
    double robust = 0.0;
    const tsc_status st =
        tsc_attack_eval_run(model_path.c_str(), dataset_json.empty() ? nullptr : dataset_json.c_str(),
                            a.dump().c_str(), cache_dir(), out_csv.empty() ? nullptr : out_csv.c_str(), &robust);
    if (st == TSC_OK) std::printf("robust_accuracy %.6f\n", robust);
    return report(st);
  }

  if (corrupt->parsed()) {
    json c;
    c["severity"] = severity;
    c["seed"] = seed_flag;
    if (!kinds.empty()) c["kinds"] = kinds;
    double mean = 0.0;
    const tsc_status st =
        tsc_corrupt_eval_run(model_path.c_str(), dataset_json.empty() ? nullptr : dataset_json.c_str(),
                             c.dump().c_str(), cache_dir(), out_csv.empty() ? nullptr : out_csv.c_str(), &mean);
    if (st == TSC_OK) std::printf("mean_corrupted_accuracy %.6f\n", mean);
    return report(st);
  }

  if (analyze->parsed()) {
    json o;
    o["attack"] = {{"loss", "ce"}, {"eps", eps}, {"steps", steps}, {"seed", seed_flag}};
    const tsc_status st =
        tsc_analyze_run(model_path.c_str(), dataset_json.empty() ? nullptr : dataset_json.c_str(),
                        o.dump().c_str(), cache_dir(), out_dir.c_str());
    if (st == TSC_OK) std::cout << "wrote " << out_dir << "\n";
    return report(st);
  }

  if (gradcheck->parsed()) {
    char* rep = nullptr;
    const tsc_status st = tsc_grad_check_run(seed_flag, instances, &rep);
    if (rep) {
      std::cout << rep << "\n";
      tsc_string_free(rep);
    }
    return report(st);
  }

  return 0;
}
