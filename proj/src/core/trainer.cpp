#include "core/trainer.hpp"

#include <cmath>

#include "core/attacks.hpp"
#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/loss_graph.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

namespace tempscale {

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("train config: tau must be > 0");
  if (!(lr_max >= lr_min) || lr_min < 0.0) throw ConfigError("train config: need lr_max >= lr_min >= 0");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0, 1)");
}

double cosine_lr(int t, int total, double lr_max, double lr_min) {
  if (total == 0) throw UsageError("cosine_lr: schedule length must be > 0");
  if (t < 0 || t > total) throw UsageError("cosine_lr: step outside [0, T]");
  return lr_min + (lr_max - lr_min) * (1.0 + std::cos(M_PI * static_cast<double>(t) / total)) / 2.0;
}

void sgd_step(ParameterStore& params, double lr, double momentum, SgdState& state) {
  for (const std::string& name : params.names()) {
    Parameter& p = params.at(name);
    auto it = state.velocity.find(name);
    if (it == state.velocity.end()) it = state.velocity.emplace(name, Tensor(p.value.shape())).first;
    Tensor& v = it->second;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] + p.grad[i];
      p.value[i] -= lr * v[i];
    }
  }
  params.zero_grad();
}

EvalResult evaluate(const Model& m, const Dataset& ds) {
  EvalResult r;
  const std::size_t n = ds.size();
  if (n == 0) return r;
  constexpr std::size_t kChunk = 256;
  long correct = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t end = std::min(n, start + kChunk);
    std::vector<int> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
    Batch b = gather_batch(ds, idx);
    const Tensor logits = m.forward(b.inputs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* row = logits.data() + i * static_cast<std::size_t>(m.classes);
      if (argmax_lowest(row, m.classes) == b.labels[i]) ++correct;
      loss_sum += ce_loss_tau_row(logits, static_cast<int>(i), b.labels[i], 1.0);
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.error_count = static_cast<long>(n) - correct;
  r.mean_loss = loss_sum / static_cast<double>(n);
  return r;
}

namespace {

TrainResult train_loop(const TrainConfig& cfg, const InnerAttack* inner, const EncoderSpec& spec,
                       const SplitDataset& data, const std::string& config_json) {
  cfg.validate();
  data.train.validate();
  Model model = init_model(spec, data.train.classes, cfg.seed);
  model.train_tau = cfg.tau;
  model.train_epochs = cfg.epochs;
  model.train_config_json = config_json;
  model.dataset_id = cfg.dataset_id.empty() ? data.train.name : cfg.dataset_id;

  SgdState state;
  std::vector<EpochRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.epochs));
  const std::size_t n = data.train.size();

  AttackConfig inner_cfg;
  if (inner) {
    inner_cfg.loss = AttackLoss::ce;
    inner_cfg.eps = inner->eps;
    inner_cfg.steps = inner->steps;
    inner_cfg.step_size = inner->step_size;
    inner_cfg.random_start = inner->random_start;
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
    const auto batches = batch_indices(n, cfg.batch_size, derive_seed(cfg.seed, "epoch-order", epoch), true);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Batch b = gather_batch(data.train, batches[bi]);
      Tape tape;
      double batch_loss;
      if (inner) {
        const std::uint64_t base =
            derive_seed(cfg.seed, "inner-attack", static_cast<std::uint64_t>(epoch) * batches.size() + bi);
        std::vector<std::uint64_t> seeds(b.labels.size());
        for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = base ^ i;
        const Tensor adv = pgd_batch(model, b.inputs, b.labels, inner_cfg, seeds);
        auto clean_tr = model.trace_trainable(tape, tape.constant(b.inputs));
        auto adv_tr = model.trace_trainable(tape, tape.constant(adv));
        auto loss = tape.add(ce_graph(tape, clean_tr.logits, b.labels, cfg.tau, true),
                             ce_graph(tape, adv_tr.logits, b.labels, 1.0, true));
        batch_loss = tape.value(loss).item();
        if (std::isfinite(batch_loss)) tape.backward(loss);
      } else {
        auto tr = model.trace_trainable(tape, tape.constant(b.inputs));
        auto loss = ce_graph(tape, tr.logits, b.labels, cfg.tau, true);
        batch_loss = tape.value(loss).item();
        if (std::isfinite(batch_loss)) tape.backward(loss);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("mean loss non-finite at epoch " + std::to_string(epoch) + " (tau=" +
                              fmt_double(cfg.tau) + ")");
      }
      loss_sum += batch_loss * static_cast<double>(b.labels.size());
      sgd_step(model.params, lr, cfg.momentum, state);
    }
    const EvalResult ev = evaluate(model, data.test);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.test_errors = ev.error_count;
    rec.test_acc = ev.accuracy;
    rec.lr = lr;
    records.push_back(rec);
  }
  return TrainResult{std::move(model), std::move(records)};
}

}  // namespace

TrainResult train_standard(const TrainConfig& cfg, const EncoderSpec& spec, const SplitDataset& data) {
  return train_loop(cfg, nullptr, spec, data, train_config_to_json(cfg).dump());
}

TrainResult train_adversarial(const ATConfig& cfg, const EncoderSpec& spec, const SplitDataset& data) {
  if (cfg.inner.eps < 0.0) throw ConfigError("adversarial config: eps must be >= 0");
  if (cfg.inner.steps < 0) throw ConfigError("adversarial config: steps must be >= 0");
  return train_loop(cfg, &cfg.inner, spec, data, at_config_to_json(cfg).dump());
}

void write_epoch_csv(const std::vector<EpochRecord>& records, const std::string& path) {
  CsvWriter csv(path);
  csv.row({"epoch", "train_loss", "test_errors", "test_acc", "lr"});
  for (const EpochRecord& r : records) {
    csv.row({fmt_int(r.epoch), fmt_double(r.train_loss), fmt_int(r.test_errors), fmt_double(r.test_acc),
             fmt_double(r.lr)});
  }
  csv.close();
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["tau"] = cfg.tau;
  j["lr_max"] = cfg.lr_max;
  j["lr_min"] = cfg.lr_min;
  j["momentum"] = cfg.momentum;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  if (!cfg.dataset_id.empty()) j["dataset"] = cfg.dataset_id;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string ctx = "train config";
  check_keys(j, {"tau", "lr_max", "lr_min", "momentum", "epochs", "batch_size", "seed", "dataset"}, ctx);
  TrainConfig cfg;
  cfg.tau = get_num_or(j, "tau", 1.0, ctx);
  cfg.lr_max = get_num_or(j, "lr_max", 0.1, ctx);
  cfg.lr_min = get_num_or(j, "lr_min", 0.0, ctx);
  cfg.momentum = get_num_or(j, "momentum", 0.9, ctx);
  cfg.epochs = static_cast<int>(get_int_or(j, "epochs", 30, ctx));
  cfg.batch_size = static_cast<int>(get_int_or(j, "batch_size", 128, ctx));
  cfg.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0;
  cfg.dataset_id = get_str_or(j, "dataset", "", ctx);
  cfg.validate();
  return cfg;
}

json at_config_to_json(const ATConfig& cfg) {
  json j = train_config_to_json(cfg);
  json a;
  a["steps"] = cfg.inner.steps;
  a["eps"] = cfg.inner.eps;
  a["step_size"] = cfg.inner.step_size;
  a["random_start"] = cfg.inner.random_start;
  j["adversarial"] = a;
  return j;
}

ATConfig at_config_from_json(const json& j) {
  const std::string ctx = "adversarial train config";
  json base = j;
  base.erase("adversarial");
  ATConfig cfg;
  static_cast<TrainConfig&>(cfg) = train_config_from_json(base);
  if (j.contains("adversarial") && !j.at("adversarial").is_null()) {
    const json& a = j.at("adversarial");
    check_keys(a, {"steps", "eps", "step_size", "random_start"}, ctx);
    cfg.inner.steps = static_cast<int>(get_int_or(a, "steps", 10, ctx));
    cfg.inner.eps = get_num_or(a, "eps", 8.0 / 255.0, ctx);
    cfg.inner.step_size = get_num_or(a, "step_size", 2.0 / 255.0, ctx);
    cfg.inner.random_start = get_bool_or(a, "random_start", true, ctx);
  }
  return cfg;
}

}  // namespace tempscale
