#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/tensor.hpp"

namespace tempscale {

enum class CorruptionKind { gaussian_noise, impulse_noise, gaussian_blur, contrast, brightness };

std::string corruption_kind_name(CorruptionKind k);
CorruptionKind corruption_kind_from_name(const std::string& name);
std::vector<CorruptionKind> all_corruption_kinds(bool image_data);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 3;  // 1..5
  std::uint64_t seed = 0;
};

// Severity parameter tables (index 0 = severity 1):
//   gaussian_noise sigma        {0.02, 0.05, 0.10, 0.15, 0.20}
//   impulse fraction            {0.01, 0.02, 0.05, 0.08, 0.12}
//   blur sigma (image only)     {0.5, 0.8, 1.2, 1.6, 2.0}
//   contrast factor             {0.85, 0.7, 0.55, 0.4, 0.3}
//   brightness offset           {0.05, 0.1, 0.15, 0.2, 0.25}
double corruption_parameter(CorruptionKind kind, int severity);

// Applies the corruption to one sample and clips to [0, 1]. Impulse noise
// sets the chosen fraction of entries to 0 or 1 with equal probability;
// blur is a separable Gaussian with reflected borders (image data only);
// contrast rescales around the sample mean; brightness adds a constant.
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec);

struct CorruptionResult {
  std::vector<std::pair<std::string, double>> per_kind;  // (kind name, accuracy)
  double mean_accuracy = 0.0;                            // unweighted over kinds
};

CorruptionResult corrupted_accuracy(const Model& m, const Dataset& ds, const std::vector<CorruptionKind>& kinds,
                                    int severity, std::uint64_t seed);

void write_corruption_csv(const CorruptionResult& r, int severity, const std::string& path);

}  // namespace tempscale
