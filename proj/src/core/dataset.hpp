#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/json_util.hpp"
#include "core/tensor.hpp"

namespace tempscale {

struct Dataset {
  std::string name;
  int classes = 0;
  Shape sample_shape;
  Tensor samples;  // [N, ...sample_shape], all entries in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor sample(std::size_t i) const;
  void validate() const;
};

struct BlobSpec {
  int classes = 2;
  int dim = 16;                // flat variant
  int height = 0, width = 0;   // image variant (single channel)
  int train_per_class = 100;
  int test_per_class = 50;
  double separation = 0.5;     // min pairwise center distance (flat variant)
  double noise = 0.05;         // per-coordinate Gaussian sigma
  std::uint64_t seed = 0;

  bool image() const { return height > 0; }
  void validate() const;
  std::string id() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Gaussian blobs around class centers drawn uniformly in [0.25, 0.75]^d and
// rescaled about the box center so the minimum pairwise distance equals
// `separation` exactly; samples are clipped to [0, 1]. Train and test come
// from independent seeded draws around the same centers.
SplitDataset gen_blobs(const BlobSpec& spec);

// Image-shaped variant: one smooth seeded template per class plus pixel
// noise; `separation` is not used.
SplitDataset gen_blob_images(const BlobSpec& spec);

// IDX-format loader (big-endian header; magic 0x803 for images, 0x801 for
// labels). Pixels are scaled to [0, 1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Deterministic batch index plan: seeded Fisher-Yates when shuffling, final
// short batch kept.
std::vector<std::vector<int>> batch_indices(std::size_t n, int batch_size, std::uint64_t seed, bool shuffle);

struct Batch {
  Tensor inputs;  // [B, ...sample_shape]
  std::vector<int> labels;
};
Batch gather_batch(const Dataset& ds, const std::vector<int>& idx);

// Dataset spec JSON: {"type":"blobs"|"blob-images", ...} or
// {"type":"idx","train_images":...,"train_labels":...,"test_images":...,"test_labels":...}.
// Relative idx paths resolve against cache_dir when it is non-empty.
SplitDataset dataset_from_json(const json& spec, const std::string& cache_dir);
BlobSpec blob_spec_from_json(const json& spec);
json blob_spec_to_json(const BlobSpec& spec, bool image);

}  // namespace tempscale
