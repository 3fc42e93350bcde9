#include "core/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

namespace tempscale {

std::string corruption_kind_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::brightness: return "brightness";
  }
  return "?";
}

CorruptionKind corruption_kind_from_name(const std::string& name) {
  if (name == "gaussian_noise") return CorruptionKind::gaussian_noise;
  if (name == "impulse_noise") return CorruptionKind::impulse_noise;
  if (name == "gaussian_blur") return CorruptionKind::gaussian_blur;
  if (name == "contrast") return CorruptionKind::contrast;
  if (name == "brightness") return CorruptionKind::brightness;
  throw UsageError("unknown corruption kind '" + name + "'");
}

std::vector<CorruptionKind> all_corruption_kinds(bool image_data) {
  std::vector<CorruptionKind> kinds{CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
                                    CorruptionKind::contrast, CorruptionKind::brightness};
  if (image_data) kinds.insert(kinds.begin() + 2, CorruptionKind::gaussian_blur);
  return kinds;
}

double corruption_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5) throw UsageError("corruption severity must be in 1..5");
  static constexpr double kGaussSigma[5] = {0.02, 0.05, 0.10, 0.15, 0.20};
  static constexpr double kImpulseFrac[5] = {0.01, 0.02, 0.05, 0.08, 0.12};
  static constexpr double kBlurSigma[5] = {0.5, 0.8, 1.2, 1.6, 2.0};
  static constexpr double kContrast[5] = {0.85, 0.7, 0.55, 0.4, 0.3};
  static constexpr double kBrightness[5] = {0.05, 0.1, 0.15, 0.2, 0.25};
  const int i = severity - 1;
  switch (kind) {
    case CorruptionKind::gaussian_noise: return kGaussSigma[i];
    case CorruptionKind::impulse_noise: return kImpulseFrac[i];
    case CorruptionKind::gaussian_blur: return kBlurSigma[i];
    case CorruptionKind::contrast: return kContrast[i];
    case CorruptionKind::brightness: return kBrightness[i];
  }
  throw UsageError("unknown corruption kind");
}

namespace {

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

Tensor gaussian_blur_image(const Tensor& x, double sigma) {
  // Separable Gaussian, radius 2*sigma rounded up, reflected borders.
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= ksum;
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };
  Tensor tmp(x.shape()), out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t plane = static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] *
               x[plane + static_cast<std::size_t>(i) * w + reflect(j + k, w)];
        }
        tmp[plane + static_cast<std::size_t>(i) * w + j] = s;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[plane + static_cast<std::size_t>(reflect(i + k, h)) * w + j];
        }
        out[plane + static_cast<std::size_t>(i) * w + j] = s;
      }
  }
  return out;
}

}  // namespace

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec) {
  for (double v : x.vals()) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("corrupt: input outside [0, 1]");
  }
  const double p = corruption_parameter(spec.kind, spec.severity);
  Tensor out = x;
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      Rng rng(spec.seed);
      for (double& v : out.vals()) v = clip01(v + p * rng.normal());
      break;
    }
    case CorruptionKind::impulse_noise: {
      Rng rng(spec.seed);
      for (double& v : out.vals()) {
        if (rng.uniform01() < p) v = rng.uniform01() < 0.5 ? 0.0 : 1.0;
      }
      break;
    }
    case CorruptionKind::gaussian_blur: {
      if (x.ndim() != 3) throw UsageError("gaussian_blur needs image-shaped [C,H,W] data");
      out = gaussian_blur_image(x, p);
      for (double& v : out.vals()) v = clip01(v);
      break;
    }
    case CorruptionKind::contrast: {
      double mean = 0.0;
      for (double v : x.vals()) mean += v;
      mean /= static_cast<double>(x.size());
      for (double& v : out.vals()) v = clip01((v - mean) * p + mean);
      break;
    }
    case CorruptionKind::brightness: {
      for (double& v : out.vals()) v = clip01(v + p);
      break;
    }
  }
  return out;
}

CorruptionResult corrupted_accuracy(const Model& m, const Dataset& ds, const std::vector<CorruptionKind>& kinds,
                                    int severity, std::uint64_t seed) {
  if (kinds.empty()) throw UsageError("corrupted_accuracy: no corruption kinds");
  CorruptionResult out;
  const std::size_t n = ds.size();
  for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
    long correct = 0;
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
      const std::size_t end = std::min(n, start + kChunk);
      std::vector<int> idx;
      for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
      Batch b = gather_batch(ds, idx);
      const std::size_t elems = shape_numel(ds.sample_shape);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        CorruptionSpec cs;
        cs.kind = kinds[ki];
        cs.severity = severity;
        cs.seed = derive_seed(seed, corruption_kind_name(kinds[ki]), static_cast<std::uint64_t>(idx[i]));
        const Tensor xc = corrupt(ds.sample(static_cast<std::size_t>(idx[i])), cs);
        std::copy_n(xc.data(), elems, b.inputs.data() + i * elems);
      }
      const Tensor logits = m.forward(b.inputs);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* row = logits.data() + i * static_cast<std::size_t>(m.classes);
        if (argmax_lowest(row, m.classes) == b.labels[i]) ++correct;
      }
    }
    const double acc = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    out.per_kind.emplace_back(corruption_kind_name(kinds[ki]), acc);
    out.mean_accuracy += acc;
  }
  out.mean_accuracy /= static_cast<double>(kinds.size());
  return out;
}

void write_corruption_csv(const CorruptionResult& r, int severity, const std::string& path) {
  CsvWriter csv(path);
  csv.row({"kind", "severity", "accuracy"});
  for (const auto& [kind, acc] : r.per_kind) csv.row({kind, fmt_int(severity), fmt_double(acc)});
  csv.row({"mean", fmt_int(severity), fmt_double(r.mean_accuracy)});
  csv.close();
}

}  // namespace tempscale
