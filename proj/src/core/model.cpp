#include "core/model.hpp"

#include <cmath>
#include <functional>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/json_util.hpp"
#include "core/rng.hpp"

namespace tempscale {

std::string encoder_kind_name(EncoderKind k) { return k == EncoderKind::mlp ? "mlp" : "small-cnn"; }

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "mlp") return EncoderKind::mlp;
  if (name == "small-cnn") return EncoderKind::small_cnn;
  throw ConfigError("unknown encoder kind '" + name + "'");
}

void EncoderSpec::validate() const {
  if (feature_dim < 2) throw ConfigError("encoder feature_dim must be >= 2");
  if (kind == EncoderKind::mlp) {
    if (input_shape.size() != 1 || input_shape[0] < 1) {
      throw ConfigError("mlp encoder needs a flat input shape, got " + shape_str(input_shape));
    }
    if (hidden.empty()) throw ConfigError("mlp encoder needs at least one hidden layer");
    for (int w : hidden)
      if (w < 1) throw ConfigError("mlp hidden width must be >= 1");
  } else {
    if (input_shape.size() != 3) {
      throw ConfigError("small-cnn encoder needs a [C,H,W] input shape, got " + shape_str(input_shape));
    }
    if (channels.empty()) throw ConfigError("small-cnn encoder needs at least one conv layer");
    int h = input_shape[1], w = input_shape[2];
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] < 1) throw ConfigError("conv channel count must be >= 1");
      if (h % 2 != 0 || w % 2 != 0) {
        throw ConfigError("small-cnn input spatial dims must halve cleanly at every pooling stage");
      }
      h /= 2;
      w /= 2;
    }
  }
}

EncoderSpec EncoderSpec::mlp(int input_dim, std::vector<int> hidden, int feature_dim) {
  EncoderSpec s;
  s.kind = EncoderKind::mlp;
  s.input_shape = {input_dim};
  s.hidden = std::move(hidden);
  s.feature_dim = feature_dim;
  s.validate();
  return s;
}

EncoderSpec EncoderSpec::small_cnn(Shape chw, std::vector<int> channels, int feature_dim) {
  EncoderSpec s;
  s.kind = EncoderKind::small_cnn;
  s.input_shape = std::move(chw);
  s.channels = std::move(channels);
  s.feature_dim = feature_dim;
  s.validate();
  return s;
}

namespace {

// Shared forward-graph builder; `lift` turns a parameter name into a tape
// leaf (trainable param or frozen constant).
Model::Trace build_trace(const EncoderSpec& spec, int classes, Tape& tape, Tape::NodeId x,
                         const std::function<Tape::NodeId(const std::string&)>& lift) {
  (void)classes;
  Tape::NodeId h = x;
  if (spec.kind == EncoderKind::mlp) {
    const std::size_t layers = spec.hidden.size() + 1;
    for (std::size_t i = 0; i < layers; ++i) {
      const std::string base = "enc." + std::to_string(i);
      h = tape.relu(tape.add_bias(tape.matmul(h, lift(base + ".W")), lift(base + ".b")));
    }
  } else {
    for (std::size_t i = 0; i < spec.channels.size(); ++i) {
      const std::string base = "enc.conv" + std::to_string(i);
      h = tape.conv2d(h, lift(base + ".K"), /*pad_same=*/true);
      h = tape.add_channel_bias(h, lift(base + ".b"));
      h = tape.relu(h);
      h = tape.avg_pool2(h);
    }
    h = tape.flatten(h);
    h = tape.relu(tape.add_bias(tape.matmul(h, lift("enc.fc.W")), lift("enc.fc.b")));
  }
  Model::Trace tr;
  tr.features = h;
  tr.logits = tape.matmul(h, lift("head.W"));
  return tr;
}

}  // namespace

Model::Trace Model::trace_trainable(Tape& tape, Tape::NodeId x) {
  return build_trace(spec, classes, tape, x, [&](const std::string& name) { return tape.param(params, name); });
}

Model::Trace Model::trace_frozen(Tape& tape, Tape::NodeId x) const {
  return build_trace(spec, classes, tape, x,
                     [&](const std::string& name) { return tape.constant(params.at(name).value); });
}

Tensor Model::as_batch(const Tensor& x) const {
  if (x.shape() == spec.input_shape) {
    Shape batched{1};
    for (int d : spec.input_shape) batched.push_back(d);
    return x.reshaped(batched);
  }
  if (x.ndim() == static_cast<int>(spec.input_shape.size()) + 1) {
    bool ok = true;
    for (std::size_t i = 0; i < spec.input_shape.size(); ++i) {
      if (x.dim(static_cast<int>(i) + 1) != spec.input_shape[i]) ok = false;
    }
    if (ok) return x;
  }
  throw ShapeError("input shape " + shape_str(x.shape()) + " does not match encoder input " +
                   shape_str(spec.input_shape));
}

Tensor Model::features(const Tensor& batch) const {
  Tape tape;
  auto tr = trace_frozen(tape, tape.constant(as_batch(batch)));
  return tape.value(tr.features);
}

Tensor Model::forward(const Tensor& batch) const {
  Tape tape;
  auto tr = trace_frozen(tape, tape.constant(as_batch(batch)));
  return tape.value(tr.logits);
}

Tensor Model::features_one(const Tensor& x) const {
  return features(x).reshaped({spec.feature_dim});
}

Tensor Model::forward_one(const Tensor& x) const {
  if (x.shape() != spec.input_shape) {
    throw ShapeError("input shape " + shape_str(x.shape()) + " does not match encoder input " +
                     shape_str(spec.input_shape));
  }
  return forward(x).reshaped({classes});
}

const Tensor& Model::prototype_matrix() const { return params.at("head.W").value; }

std::vector<Tensor> Model::prototypes() const {
  const Tensor& w = prototype_matrix();
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(classes));
  for (int j = 0; j < classes; ++j) {
    Tensor col({w.rows()});
    for (int i = 0; i < w.rows(); ++i) col[static_cast<std::size_t>(i)] = w.at(i, j);
    out.push_back(std::move(col));
  }
  return out;
}

namespace {

Tensor gaussian_weight(Shape shape, int fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.vals()) v = std_dev * rng.normal();
  return t;
}

}  // namespace

Model init_model(const EncoderSpec& spec, int classes, std::uint64_t seed) {
  spec.validate();
  if (classes < 2) throw UsageError("init_model: need at least 2 classes");
  Model m;
  m.spec = spec;
  m.classes = classes;
  m.train_seed = seed;

  auto weight = [&](const std::string& name, Shape shape, int fan_in) {
    m.params.create(name, gaussian_weight(std::move(shape), fan_in, derive_seed(seed, "init." + name)));
  };
  auto zeros = [&](const std::string& name, Shape shape) { m.params.create(name, Tensor(std::move(shape))); };

  if (spec.kind == EncoderKind::mlp) {
    std::vector<int> widths;
    widths.push_back(static_cast<int>(spec.input_numel()));
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(spec.feature_dim);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const std::string base = "enc." + std::to_string(i);
      weight(base + ".W", {widths[i], widths[i + 1]}, widths[i]);
      zeros(base + ".b", {widths[i + 1]});
    }
  } else {
    int in_ch = spec.input_shape[0];
    int h = spec.input_shape[1], w = spec.input_shape[2];
    for (std::size_t i = 0; i < spec.channels.size(); ++i) {
      const std::string base = "enc.conv" + std::to_string(i);
      weight(base + ".K", {spec.channels[i], in_ch, 3, 3}, in_ch * 9);
      zeros(base + ".b", {spec.channels[i]});
      in_ch = spec.channels[i];
      h /= 2;
      w /= 2;
    }
    const int flat = in_ch * h * w;
    weight("enc.fc.W", {flat, spec.feature_dim}, flat);
    zeros("enc.fc.b", {spec.feature_dim});
  }
  weight("head.W", {spec.feature_dim, classes}, spec.feature_dim);
  return m;
}

namespace {

json spec_to_json(const EncoderSpec& s) {
  json j;
  j["kind"] = encoder_kind_name(s.kind);
  j["input_shape"] = s.input_shape;
  j["feature_dim"] = s.feature_dim;
  if (s.kind == EncoderKind::mlp) {
    j["hidden"] = s.hidden;
  } else {
    j["channels"] = s.channels;
  }
  return j;
}

EncoderSpec spec_from_json(const json& j) {
  check_keys(j, {"kind", "input_shape", "feature_dim", "hidden", "channels"}, "encoder");
  EncoderSpec s;
  s.kind = encoder_kind_from_name(get_str(j, "kind", "encoder"));
  s.input_shape = require_key(j, "input_shape", "encoder").get<Shape>();
  s.feature_dim = static_cast<int>(get_int(j, "feature_dim", "encoder"));
  if (s.kind == EncoderKind::mlp) {
    s.hidden = require_key(j, "hidden", "encoder").get<std::vector<int>>();
  } else {
    s.channels = require_key(j, "channels", "encoder").get<std::vector<int>>();
  }
  s.validate();
  return s;
}

constexpr int kModelVersion = 1;

}  // namespace

void save_model(const Model& m, const std::string& path) {
  json j;
  j["format"] = "tempscale-model";
  j["version"] = kModelVersion;
  j["classes"] = m.classes;
  j["encoder"] = spec_to_json(m.spec);
  json meta;
  meta["tau"] = m.train_tau;
  meta["seed"] = m.train_seed;
  meta["epochs"] = m.train_epochs;
  meta["dataset"] = m.dataset_id;
  meta["config"] = m.train_config_json.empty() ? json(nullptr) : parse_json(m.train_config_json, "model config");
  meta["dataset_spec"] =
      m.dataset_spec_json.empty() ? json(nullptr) : parse_json(m.dataset_spec_json, "model dataset spec");
  j["metadata"] = meta;
  json params = json::object();
  for (const std::string& name : m.params.names()) {
    const Parameter& p = m.params.at(name);
    json pj;
    pj["shape"] = p.value.shape();
    pj["data"] = p.value.vals();
    params[name] = std::move(pj);
  }
  j["params"] = std::move(params);
  write_text_file(path, j.dump(1) + "\n");
}

Model load_model(const std::string& path) {
  json j = parse_json(read_text_file(path), "model file '" + path + "'");
  check_keys(j, {"format", "version", "classes", "encoder", "metadata", "params"}, "model file");
  if (get_str(j, "format", "model file") != "tempscale-model") {
    throw FormatError("'" + path + "' is not a model file");
  }
  if (get_int(j, "version", "model file") != kModelVersion) {
    throw FormatError("unsupported model version in '" + path + "'");
  }
  Model m;
  m.classes = static_cast<int>(get_int(j, "classes", "model file"));
  m.spec = spec_from_json(require_key(j, "encoder", "model file"));
  const json& meta = require_key(j, "metadata", "model file");
  check_keys(meta, {"tau", "seed", "epochs", "dataset", "config", "dataset_spec"}, "model metadata");
  m.train_tau = get_num(meta, "tau", "model metadata");
  m.train_seed = meta.at("seed").get<std::uint64_t>();
  m.train_epochs = static_cast<int>(get_int(meta, "epochs", "model metadata"));
  m.dataset_id = get_str_or(meta, "dataset", "", "model metadata");
  if (!meta.at("config").is_null()) m.train_config_json = meta.at("config").dump();
  if (!meta.at("dataset_spec").is_null()) m.dataset_spec_json = meta.at("dataset_spec").dump();
  const json& params = require_key(j, "params", "model file");
  for (auto it = params.begin(); it != params.end(); ++it) {
    Shape shape = it.value().at("shape").get<Shape>();
    std::vector<double> data = it.value().at("data").get<std::vector<double>>();
    m.params.create(it.key(), Tensor(std::move(shape), std::move(data)));
  }
  // Reject files whose parameter set does not match the declared spec.
  Model ref = init_model(m.spec, m.classes, 0);
  for (const std::string& name : ref.params.names()) {
    if (!m.params.has(name)) throw FormatError("model file missing parameter '" + name + "'");
    if (!m.params.at(name).value.same_shape(ref.params.at(name).value)) {
      throw FormatError("parameter '" + name + "' has wrong shape in '" + path + "'");
    }
  }
  if (m.params.count() != ref.params.count()) throw FormatError("model file has extraneous parameters");
  return m;
}

}  // namespace tempscale
