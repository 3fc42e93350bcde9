#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"

namespace tempscale {

Tensor Dataset::sample(std::size_t i) const {
  const std::size_t n = shape_numel(sample_shape);
  Tensor out(sample_shape);
  std::copy_n(samples.data() + i * n, n, out.data());
  return out;
}

void Dataset::validate() const {
  if (classes < 2) throw UsageError("dataset needs at least 2 classes");
  if (samples.ndim() < 2 || samples.dim(0) != static_cast<int>(labels.size())) {
    throw UsageError("dataset sample/label counts differ");
  }
  for (double v : samples.vals()) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("dataset sample value " + fmt_double(v) + " outside [0, 1]");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw IndexError("dataset label " + std::to_string(y) + " out of range");
  }
}

void BlobSpec::validate() const {
  if (classes < 2) throw ConfigError("blob spec: classes must be >= 2");
  if (train_per_class < 1 || test_per_class < 1) throw ConfigError("blob spec: per-class count must be >= 1");
  if (noise < 0.0) throw ConfigError("blob spec: noise must be >= 0");
  if (separation < 0.0) throw ConfigError("blob spec: separation must be >= 0");
  if (image()) {
    if (height < 4 || width < 4) throw ConfigError("blob spec: image dims must be >= 4");
  } else {
    if (dim < 1) throw ConfigError("blob spec: dim must be >= 1");
  }
}

std::string BlobSpec::id() const {
  std::string s = image() ? "blob-images-c" + std::to_string(classes) + "-" + std::to_string(height) + "x" +
                                std::to_string(width)
                          : "blobs-c" + std::to_string(classes) + "-d" + std::to_string(dim) + "-sep" +
                                fmt_double(separation);
  return s + "-n" + fmt_double(noise) + "-seed" + std::to_string(seed);
}

namespace {

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::vector<Tensor> draw_centers(const BlobSpec& spec) {
  Rng rng(derive_seed(spec.seed, "centers"));
  const int m = spec.classes, d = spec.dim;
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Tensor> centers;
    centers.reserve(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
      Tensor t({d});
      for (double& v : t.vals()) v = rng.uniform(0.25, 0.75);
      centers.push_back(std::move(t));
    }
    if (spec.separation == 0.0) return centers;
    double dmin = std::numeric_limits<double>::infinity();
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b) dmin = std::min(dmin, norm2(sub(centers[a], centers[b])));
    if (dmin == 0.0) continue;
    // Rescale about the box center so the minimum pairwise distance is
    // exactly `separation`; reject draws that leave [0, 1].
    const double s = spec.separation / dmin;
    bool ok = true;
    for (auto& c : centers) {
      for (double& v : c.vals()) {
        v = 0.5 + (v - 0.5) * s;
        if (v < 0.0 || v > 1.0) ok = false;
      }
    }
    if (ok) return centers;
  }
  throw UsageError("blob generation: could not place " + std::to_string(m) + " centers at separation " +
                   fmt_double(spec.separation) + " in dimension " + std::to_string(d));
}

Dataset sample_around(const std::vector<Tensor>& centers, const BlobSpec& spec, int per_class,
                      const char* split_label, Shape sample_shape) {
  Dataset ds;
  ds.classes = spec.classes;
  ds.sample_shape = sample_shape;
  ds.name = spec.id() + "-" + split_label;
  const std::size_t n = shape_numel(sample_shape);
  Shape full{spec.classes * per_class};
  for (int d : sample_shape) full.push_back(d);
  ds.samples = Tensor(full);
  Rng rng(derive_seed(spec.seed, split_label));
  std::size_t off = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      const double* ctr = centers[static_cast<std::size_t>(c)].data();
      for (std::size_t i = 0; i < n; ++i) {
        ds.samples[off++] = clip01(ctr[i] + spec.noise * rng.normal());
      }
      ds.labels.push_back(c);
    }
  }
  ds.validate();
  return ds;
}

}  // namespace

SplitDataset gen_blobs(const BlobSpec& spec) {
  spec.validate();
  if (spec.image()) throw UsageError("gen_blobs: spec describes image data, use gen_blob_images");
  const std::vector<Tensor> centers = draw_centers(spec);
  SplitDataset out;
  out.train = sample_around(centers, spec, spec.train_per_class, "train", {spec.dim});
  out.test = sample_around(centers, spec, spec.test_per_class, "test", {spec.dim});
  return out;
}

SplitDataset gen_blob_images(const BlobSpec& spec) {
  spec.validate();
  if (!spec.image()) throw UsageError("gen_blob_images: spec describes flat data, use gen_blobs");
  // Smooth per-class template: a seeded 4x4 grid in [0.3, 0.7], bilinearly
  // upsampled to H x W.
  const int h = spec.height, w = spec.width;
  std::vector<Tensor> templates;
  for (int c = 0; c < spec.classes; ++c) {
    Rng rng(derive_seed(spec.seed, "template", static_cast<std::uint64_t>(c)));
    constexpr int g = 4;
    double grid[g][g];
    for (auto& row : grid)
      for (double& v : row) v = rng.uniform(0.3, 0.7);
    Tensor t({1, h, w});
    for (int i = 0; i < h; ++i) {
      const double gy = static_cast<double>(i) / (h - 1) * (g - 1);
      const int y0 = std::min(static_cast<int>(gy), g - 2);
      const double fy = gy - y0;
      for (int j = 0; j < w; ++j) {
        const double gx = static_cast<double>(j) / (w - 1) * (g - 1);
        const int x0 = std::min(static_cast<int>(gx), g - 2);
        const double fx = gx - x0;
        t[static_cast<std::size_t>(i) * w + j] = (1 - fy) * ((1 - fx) * grid[y0][x0] + fx * grid[y0][x0 + 1]) +
                                                 fy * ((1 - fx) * grid[y0 + 1][x0] + fx * grid[y0 + 1][x0 + 1]);
      }
    }
    templates.push_back(std::move(t));
  }
  SplitDataset out;
  out.train = sample_around(templates, spec, spec.train_per_class, "train", {1, h, w});
  out.test = sample_around(templates, spec, spec.test_per_class, "test", {1, h, w});
  return out;
}

namespace {

class IdxReader {
public:
  explicit IdxReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }

  std::uint32_t read_u32() {
    unsigned char b[4];
    read_bytes(b, 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
  }

  void read_bytes(unsigned char* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("'" + path_ + "' truncated at byte " + std::to_string(offset_));
    }
    offset_ += n;
  }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) throw FormatError("'" + path_ + "' has trailing bytes at byte " + std::to_string(offset_));
  }

  std::size_t offset() const { return offset_; }

private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  IdxReader img(images_path);
  const std::uint32_t img_magic = img.read_u32();
  if (img_magic != 0x00000803u) {
    throw FormatError("'" + images_path + "' bad image magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%08x", img_magic);
      return std::string(buf);
    }() + " at byte 0");
  }
  const std::uint32_t count = img.read_u32();
  const std::uint32_t rows = img.read_u32();
  const std::uint32_t cols = img.read_u32();
  if (rows == 0 || cols == 0) throw FormatError("'" + images_path + "' has zero image dimensions");

  IdxReader lab(labels_path);
  const std::uint32_t lab_magic = lab.read_u32();
  if (lab_magic != 0x00000801u) {
    throw FormatError("'" + labels_path + "' bad label magic at byte 0");
  }
  const std::uint32_t lab_count = lab.read_u32();
  if (lab_count != count) {
    throw FormatError("count mismatch: " + std::to_string(count) + " images vs " + std::to_string(lab_count) +
                      " labels");
  }

  Dataset ds;
  ds.name = "idx:" + images_path;
  ds.sample_shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
  ds.samples = Tensor({static_cast<int>(count), 1, static_cast<int>(rows), static_cast<int>(cols)});
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  std::size_t off = 0;
  int max_label = 0;
  ds.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read_bytes(buf.data(), pixels);
    for (std::size_t p = 0; p < pixels; ++p) ds.samples[off++] = static_cast<double>(buf[p]) / 255.0;
    unsigned char y;
    lab.read_bytes(&y, 1);
    ds.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, static_cast<int>(y));
  }
  img.expect_eof();
  lab.expect_eof();
  ds.classes = std::max(max_label + 1, 2);
  ds.validate();
  return ds;
}

std::vector<std::vector<int>> batch_indices(std::size_t n, int batch_size, std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch gather_batch(const Dataset& ds, const std::vector<int>& idx) {
  const std::size_t n = shape_numel(ds.sample_shape);
  Shape shape{static_cast<int>(idx.size())};
  for (int d : ds.sample_shape) shape.push_back(d);
  Batch b;
  b.inputs = Tensor(shape);
  b.labels.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(ds.samples.data() + static_cast<std::size_t>(idx[i]) * n, n, b.inputs.data() + i * n);
    b.labels.push_back(ds.labels[static_cast<std::size_t>(idx[i])]);
  }
  return b;
}

BlobSpec blob_spec_from_json(const json& spec) {
  const std::string ctx = "dataset spec";
  BlobSpec b;
  b.classes = static_cast<int>(get_int(spec, "classes", ctx));
  b.train_per_class = static_cast<int>(get_int(spec, "train_per_class", ctx));
  b.test_per_class = static_cast<int>(get_int(spec, "test_per_class", ctx));
  b.noise = get_num(spec, "noise", ctx);
  b.seed = spec.contains("seed") ? spec.at("seed").get<std::uint64_t>() : 0;
  const std::string type = get_str(spec, "type", ctx);
  if (type == "blobs") {
    b.dim = static_cast<int>(get_int(spec, "dim", ctx));
    b.separation = get_num(spec, "separation", ctx);
  } else {
    b.height = static_cast<int>(get_int(spec, "height", ctx));
    b.width = static_cast<int>(get_int(spec, "width", ctx));
  }
  b.validate();
  return b;
}

json blob_spec_to_json(const BlobSpec& spec, bool image) {
  json j;
  j["type"] = image ? "blob-images" : "blobs";
  j["classes"] = spec.classes;
  j["train_per_class"] = spec.train_per_class;
  j["test_per_class"] = spec.test_per_class;
  j["noise"] = spec.noise;
  j["seed"] = spec.seed;
  if (image) {
    j["height"] = spec.height;
    j["width"] = spec.width;
  } else {
    j["dim"] = spec.dim;
    j["separation"] = spec.separation;
  }
  return j;
}

SplitDataset dataset_from_json(const json& spec, const std::string& cache_dir) {
  const std::string ctx = "dataset spec";
  const std::string type = get_str(spec, "type", ctx);
  if (type == "blobs") {
    check_keys(spec, {"type", "classes", "dim", "train_per_class", "test_per_class", "separation", "noise", "seed"},
               ctx);
    return gen_blobs(blob_spec_from_json(spec));
  }
  if (type == "blob-images") {
    check_keys(spec, {"type", "classes", "height", "width", "train_per_class", "test_per_class", "noise", "seed"},
               ctx);
    return gen_blob_images(blob_spec_from_json(spec));
  }
  if (type == "idx") {
    check_keys(spec, {"type", "train_images", "train_labels", "test_images", "test_labels"}, ctx);
    auto resolve = [&](const std::string& p) {
      if (!cache_dir.empty() && !p.empty() && p[0] != '/') return cache_dir + "/" + p;
      return p;
    };
    SplitDataset out;
    out.train = load_idx(resolve(get_str(spec, "train_images", ctx)), resolve(get_str(spec, "train_labels", ctx)));
    out.test = load_idx(resolve(get_str(spec, "test_images", ctx)), resolve(get_str(spec, "test_labels", ctx)));
    if (out.train.classes != out.test.classes) {
      const int m = std::max(out.train.classes, out.test.classes);
      out.train.classes = m;
      out.test.classes = m;
    }
    return out;
  }
  throw ConfigError("dataset spec: unknown type '" + type + "'");
}

}  // namespace tempscale
