#pragma once

#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/tensor.hpp"

namespace tempscale {

// Per-sample relation between the encoded feature and every class prototype.
struct PrototypeGeometry {
  std::vector<double> euclidean;  // ||f(x) - w_j||_2
  std::vector<double> cosine;     // <f(x), w_j> / (||f(x)|| ||w_j||)
  int label = 0;
};

PrototypeGeometry prototype_geometry(const Model& m, const Tensor& x, int label);

// Highest-probability class other than the true one; lowest index on ties.
int error_prone_class(const Tensor& probs, int label);

// Min-max map onto [0, 1]; errors on constant input.
std::vector<double> normalize_range(const std::vector<double>& values);

struct DistStats {
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
};

// Quantiles use linear interpolation between order statistics.
DistStats dist_stats(std::vector<double> values);

// Per-sample population variance (divide by count) of the negative-class
// distances. Euclidean distances are first min-max normalized per model over
// all (sample, prototype) pairs; cosine similarities are used raw.
struct VarianceSummary {
  std::vector<double> euclid_var;
  std::vector<double> cosine_var;
  DistStats euclid_stats;
  DistStats cosine_stats;
};

VarianceSummary variance_summary(const Model& m, const Dataset& ds);

struct LogitShiftRecord {
  Tensor clean_logits;
  Tensor adv_logits;
  Tensor delta;  // adversarial - clean, exactly
  int label = 0;
  int error_prone = 0;           // from the clean temperature-1 probabilities
  double label_delta = 0.0;      // delta of the true class
  double error_prone_delta = 0.0;
};

LogitShiftRecord logit_shift(const Model& m, const Tensor& x, const Tensor& x_adv, int label);

struct LogitShiftAggregate {
  double mean_label_delta = 0.0;
  double mean_error_prone_delta = 0.0;
  double mean_abs_delta = 0.0;  // over all samples and classes
};

LogitShiftAggregate aggregate_logit_shift(const std::vector<LogitShiftRecord>& records);

// CSV: sample index, label, then the d feature values, with a header row.
void export_features(const Model& m, const Dataset& ds, const std::string& path);

// Tidy CSV of prototype_geometry over the whole dataset:
// sample,label,class,euclidean,cosine.
void write_geometry_csv(const Model& m, const Dataset& ds, const std::string& path);

void write_variance_csv(const VarianceSummary& v, const std::string& per_sample_path,
                        const std::string& stats_path);

void write_logit_shift_csv(const std::vector<LogitShiftRecord>& records, const std::string& path);

}  // namespace tempscale
