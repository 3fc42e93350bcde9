#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/attacks.hpp"
#include "core/corruption.hpp"
#include "core/dataset.hpp"
#include "core/json_util.hpp"
#include "core/model.hpp"
#include "core/trainer.hpp"

namespace tempscale {

struct SweepAttack {
  std::string name;
  json spec;  // validated attack spec; seed filled per entry at run time
};

// Declarative experiment description. All randomness downstream derives from
// master_seed via derive_seed(); no wall-clock or OS entropy anywhere.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t master_seed = 0;
  json dataset;       // dataset spec (strict)
  json encoder;       // encoder spec without input_shape (derived from data)
  TrainConfig train;  // base settings; tau and seed are set per entry
  bool adversarial = false;
  InnerAttack inner;
  std::vector<double> temperatures;
  std::vector<SweepAttack> attacks;
  std::vector<std::string> corruption_kinds;  // empty = all kinds valid for the data
  int corruption_severity = 3;
  std::string cache_dir;  // for idx datasets; not part of the config file
};

ExperimentConfig experiment_config_from_json(const json& j);
json experiment_config_to_json(const ExperimentConfig& c);

// FNV-1a over the canonical (sorted-key) JSON dump, as a 16-digit hex string.
std::string config_hash(const json& j);

// Encoder spec materialized against the actual sample shape.
EncoderSpec make_encoder(const json& encoder_json, const Shape& sample_shape);

// Train one model (first temperature); writes model.json and epochs.csv.
void run_train(const ExperimentConfig& cfg, const std::string& out_dir);

// Full temperature sweep: per-tau subdirectory with model, convergence
// trace, attack/corruption results and geometry exports, plus summary.csv
// and a manifest listing every emitted file with its content hash.
void run_sweep(const ExperimentConfig& cfg, const std::string& out_dir);

// Dataset used for evaluation commands: an explicit spec when given,
// otherwise the spec embedded in the model file.
SplitDataset resolve_dataset(const std::string& dataset_json, const Model& m, const std::string& cache_dir);

double run_attack_eval(const std::string& model_path, const std::string& dataset_json,
                       const std::string& attack_json, const std::string& cache_dir, const std::string& out_csv);

double run_corrupt_eval(const std::string& model_path, const std::string& dataset_json,
                        const std::string& corruption_json, const std::string& cache_dir,
                        const std::string& out_csv);

void run_analyze(const std::string& model_path, const std::string& dataset_json, const std::string& options_json,
                 const std::string& cache_dir, const std::string& out_dir);

}  // namespace tempscale
