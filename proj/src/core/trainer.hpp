#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"

namespace tempscale {

struct TrainConfig {
  double tau = 1.0;
  double lr_max = 0.1;
  double lr_min = 0.0;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::string dataset_id;

  void validate() const;
};

struct InnerAttack {
  int steps = 10;
  double eps = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  bool random_start = true;
};

struct ATConfig : TrainConfig {
  InnerAttack inner;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  long test_errors = 0;
  double test_acc = 0.0;
  double lr = 0.0;
};

// lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2
double cosine_lr(int t, int total, double lr_max, double lr_min);

struct SgdState {
  std::map<std::string, Tensor> velocity;
};

// v <- momentum v + grad ; p <- p - lr v ; gradients zeroed afterwards.
void sgd_step(ParameterStore& params, double lr, double momentum, SgdState& state);

struct EvalResult {
  double accuracy = 0.0;
  long error_count = 0;
  double mean_loss = 0.0;  // cross entropy at temperature 1
};

// Argmax prediction with lowest-index tie break; counts are exact.
EvalResult evaluate(const Model& m, const Dataset& ds);

struct TrainResult {
  Model model;
  std::vector<EpochRecord> records;
};

// Minimizes mean temperature-tau cross entropy with SGD + epoch-stepped
// cosine annealing. Per-epoch evaluation runs at temperature 1. Aborts with
// a divergence error if the mean loss becomes non-finite.
TrainResult train_standard(const TrainConfig& cfg, const EncoderSpec& spec, const SplitDataset& data);

// Composite objective: temperature-tau cross entropy on the clean batch plus
// temperature-1 cross entropy on inner-PGD adversarial examples (the inner
// attack itself always uses temperature-1 cross entropy).
TrainResult train_adversarial(const ATConfig& cfg, const EncoderSpec& spec, const SplitDataset& data);

void write_epoch_csv(const std::vector<EpochRecord>& records, const std::string& path);

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);
json at_config_to_json(const ATConfig& cfg);
ATConfig at_config_from_json(const json& j);

}  // namespace tempscale
