#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/tensor.hpp"

namespace tempscale {

enum class AttackLoss { ce, cw_margin, dlr };

std::string attack_loss_name(AttackLoss k);
AttackLoss attack_loss_from_name(const std::string& name);

// l-inf bounded iterative signed-gradient attack configuration. All attack
// losses are evaluated at temperature 1 regardless of how the model was
// trained.
struct AttackConfig {
  AttackLoss loss = AttackLoss::ce;
  double eps = 8.0 / 255.0;
  int steps = 20;
  double step_size = 2.0 / 255.0;
  bool random_start = true;
  bool targeted = false;
  std::optional<int> target_class;  // fixed target; per-sample targets come from TargetRule
  std::uint64_t seed = 0;

  void validate(int classes) const;
};

// Margin loss max(z[y] - max_{j != y} z[j], -kappa); attacks maximize its
// negation.
double cw_margin_loss(const Tensor& logits, int label, double kappa);

// Scale- and shift-invariant logit-ratio loss
// -(z[y] - max_{j != y} z[j]) / (z_(1) - z_(3)); needs at least 3 classes and
// distinct top/third logits.
double dlr_loss(const Tensor& logits, int label);

// d(attack loss)/dx at temperature 1 for a single sample.
Tensor input_gradient(const Model& m, const Tensor& x, int label, AttackLoss loss);

// Projected signed-gradient attack on one sample. Iterates
// x <- clip_[0,1](clip_[x0 +- eps](x + alpha * sign(g))) for exactly
// cfg.steps steps, ascending the loss (untargeted) or descending toward the
// target (targeted).
Tensor pgd(const Model& m, const Tensor& x, int label, const AttackConfig& cfg);

// Batched variant used by dataset-level evaluation; sample i uses seeds[i]
// and (when targeted) targets[i]. Results are identical to per-sample pgd.
Tensor pgd_batch(const Model& m, const Tensor& x_batch, const std::vector<int>& labels, const AttackConfig& cfg,
                 const std::vector<std::uint64_t>& seeds, const std::vector<int>* targets = nullptr);

// Per-prototype decomposition of the temperature-1 CE input gradient: the
// true-class term carries coefficient (P[y] - 1), every other class carries
// P[j]; the terms sum to the full input gradient.
struct GradientDecomposition {
  std::vector<Tensor> per_class;  // input-shaped contribution of each class
  Tensor total;                   // autodiff input gradient
};
GradientDecomposition input_grad_decomposition(const Model& m, const Tensor& x, int label);

// How per-sample targets are chosen for a targeted dataset-level attack.
enum class TargetRule {
  none,         // untargeted
  fixed,        // cfg.target_class for every sample
  error_prone,  // highest-probability non-true class of the clean prediction
};

struct SampleOutcome {
  int index = 0;
  int label = 0;
  int clean_pred = 0;
  int adv_pred = 0;
  bool success = false;  // post-attack prediction differs from the true label
  double linf = 0.0;
};

struct RobustResult {
  double robust_accuracy = 0.0;  // post-attack correct / total
  std::vector<SampleOutcome> outcomes;
};

// Attacks every sample; per-sample seed is cfg.seed XOR sample index.
RobustResult robust_accuracy(const Model& m, const Dataset& ds, const AttackConfig& cfg,
                             TargetRule rule = TargetRule::none);

void write_attack_csv(const RobustResult& r, const std::string& path);

AttackConfig attack_config_from_json(const json& j, int classes);
json attack_config_to_json(const AttackConfig& cfg);

}  // namespace tempscale
