#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/tensor.hpp"

namespace tempscale {

enum class EncoderKind { mlp, small_cnn };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::mlp;
  Shape input_shape;          // {d} for mlp, {C,H,W} for small_cnn
  std::vector<int> hidden;    // mlp hidden widths
  std::vector<int> channels;  // cnn conv channel counts
  int feature_dim = 64;

  void validate() const;
  std::size_t input_numel() const { return shape_numel(input_shape); }

  static EncoderSpec mlp(int input_dim, std::vector<int> hidden = {256, 128}, int feature_dim = 64);
  static EncoderSpec small_cnn(Shape chw, std::vector<int> channels = {8, 16}, int feature_dim = 64);
};

// Classifier in factored form: encoder producing a feature vector, then a
// bias-free prototype head whose weight columns are the class prototypes.
struct Model {
  EncoderSpec spec;
  int classes = 0;
  ParameterStore params;

  // Training provenance.
  double train_tau = 1.0;
  std::uint64_t train_seed = 0;
  int train_epochs = 0;
  std::string train_config_json;  // exact training config, empty if untrained
  std::string dataset_spec_json;  // dataset spec used for training, if any
  std::string dataset_id;

  struct Trace {
    Tape::NodeId features;
    Tape::NodeId logits;
  };

  // Forward graph on a tape; x is a tape node holding an input batch.
  // trace_trainable routes parameter gradients into this model's store;
  // trace_frozen enters weights as constants (input gradients only).
  Trace trace_trainable(Tape& tape, Tape::NodeId x);
  Trace trace_frozen(Tape& tape, Tape::NodeId x) const;

  Tensor features(const Tensor& batch) const;  // [B x d]
  Tensor forward(const Tensor& batch) const;   // [B x M] logits
  Tensor features_one(const Tensor& x) const;  // [d]
  Tensor forward_one(const Tensor& x) const;   // [M]

  const Tensor& prototype_matrix() const;  // d x M
  std::vector<Tensor> prototypes() const;  // M columns, class order

  // Shape of one input sample ({d} or {C,H,W}); batches prepend a batch dim.
  Tensor as_batch(const Tensor& x) const;
};

// He-style Gaussian init (std = sqrt(2 / fan_in)), zero biases, deterministic
// in the seed; each parameter draws from its own derived stream.
Model init_model(const EncoderSpec& spec, int classes, std::uint64_t seed);

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace tempscale
