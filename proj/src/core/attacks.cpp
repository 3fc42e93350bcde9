#include "core/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/geometry.hpp"
#include "core/loss_graph.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

namespace tempscale {

std::string attack_loss_name(AttackLoss k) {
  switch (k) {
    case AttackLoss::ce: return "ce";
    case AttackLoss::cw_margin: return "cw-margin";
    case AttackLoss::dlr: return "dlr";
  }
  return "?";
}

AttackLoss attack_loss_from_name(const std::string& name) {
  if (name == "ce") return AttackLoss::ce;
  if (name == "cw-margin" || name == "cw") return AttackLoss::cw_margin;
  if (name == "dlr") return AttackLoss::dlr;
  throw ConfigError("unknown attack loss '" + name + "'");
}

void AttackConfig::validate(int classes) const {
  if (eps < 0.0) throw DomainError("attack eps must be >= 0");
  if (steps < 0) throw UsageError("attack steps must be >= 0");
  if (!(step_size > 0.0)) throw DomainError("attack step size must be > 0");
  if (loss == AttackLoss::dlr) {
    if (classes < 3) throw UsageError("dlr loss requires at least 3 classes");
    if (targeted) throw UsageError("targeted dlr attack is not supported");
  }
  if (target_class) {
    if (*target_class < 0 || *target_class >= classes) {
      throw IndexError("target class " + std::to_string(*target_class) + " out of range");
    }
  }
}

double cw_margin_loss(const Tensor& logits, int label, double kappa) {
  if (logits.ndim() != 1 || logits.dim(0) < 2) throw UsageError("cw_margin_loss: need >= 2 logits");
  if (label < 0 || label >= logits.dim(0)) throw IndexError("cw_margin_loss: bad label");
  if (kappa < 0.0) throw DomainError("cw_margin_loss: kappa must be >= 0");
  double best_other = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < logits.dim(0); ++j) {
    if (j != label) best_other = std::max(best_other, logits[static_cast<std::size_t>(j)]);
  }
  return std::max(logits[static_cast<std::size_t>(label)] - best_other, -kappa);
}

namespace {

// Indices of the three largest entries, ties broken toward lower indices.
void top3(const double* v, int n, int out[3]) {
  out[0] = out[1] = out[2] = -1;
  for (int i = 0; i < n; ++i) {
    if (out[0] < 0 || v[i] > v[out[0]]) {
      out[2] = out[1];
      out[1] = out[0];
      out[0] = i;
    } else if (out[1] < 0 || v[i] > v[out[1]]) {
      out[2] = out[1];
      out[1] = i;
    } else if (out[2] < 0 || v[i] > v[out[2]]) {
      out[2] = i;
    }
  }
}

int argmax_excluding(const double* v, int n, int skip) {
  int best = skip == 0 ? 1 : 0;
  for (int i = 0; i < n; ++i) {
    if (i != skip && v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

double dlr_loss(const Tensor& logits, int label) {
  if (logits.ndim() != 1 || logits.dim(0) < 3) throw UsageError("dlr_loss: need >= 3 logits");
  if (label < 0 || label >= logits.dim(0)) throw IndexError("dlr_loss: bad label");
  int t[3];
  top3(logits.data(), logits.dim(0), t);
  const double denom = logits[static_cast<std::size_t>(t[0])] - logits[static_cast<std::size_t>(t[2])];
  if (denom == 0.0) throw DomainError("dlr_loss: degenerate logits (top and third coincide)");
  const double zy = logits[static_cast<std::size_t>(label)];
  const double best_other = logits[static_cast<std::size_t>(argmax_excluding(logits.data(), logits.dim(0), label))];
  return -(zy - best_other) / denom;
}

namespace {

// Loss value as defined (per-sample, summed over the batch) for the given
// kind; used by input_gradient and as the building block for objectives.
Tape::NodeId loss_node(Tape& tape, Tape::NodeId logits, const std::vector<int>& labels, AttackLoss kind) {
  const Tensor& z = tape.value(logits);
  const int rows = z.rows(), cols = z.cols();
  switch (kind) {
    case AttackLoss::ce:
      return ce_graph(tape, logits, labels, 1.0, /*mean_reduce=*/false);
    case AttackLoss::cw_margin: {
      std::vector<int> best_other(static_cast<std::size_t>(rows));
      for (int r = 0; r < rows; ++r) {
        best_other[static_cast<std::size_t>(r)] =
            argmax_excluding(z.data() + static_cast<std::size_t>(r) * cols, cols, labels[static_cast<std::size_t>(r)]);
      }
      auto margin = tape.sub(tape.gather_cols(logits, labels), tape.gather_cols(logits, std::move(best_other)));
      return tape.sum(tape.clamp_min(margin, 0.0 /* -kappa with kappa = 0 */));
    }
    case AttackLoss::dlr: {
      std::vector<int> best_other(static_cast<std::size_t>(rows));
      std::vector<int> first(static_cast<std::size_t>(rows)), third(static_cast<std::size_t>(rows));
      for (int r = 0; r < rows; ++r) {
        const double* row = z.data() + static_cast<std::size_t>(r) * cols;
        int t[3];
        top3(row, cols, t);
        if (row[t[0]] == row[t[2]]) throw DomainError("dlr_loss: degenerate logits (top and third coincide)");
        first[static_cast<std::size_t>(r)] = t[0];
        third[static_cast<std::size_t>(r)] = t[2];
        best_other[static_cast<std::size_t>(r)] =
            argmax_excluding(row, cols, labels[static_cast<std::size_t>(r)]);
      }
      auto num = tape.sub(tape.gather_cols(logits, std::move(best_other)), tape.gather_cols(logits, labels));
      auto den = tape.sub(tape.gather_cols(logits, std::move(first)), tape.gather_cols(logits, std::move(third)));
      return tape.sum(tape.div(num, den));
    }
  }
  throw UsageError("unknown attack loss");
}

// Scalar node whose gradient ascent direction drives the attack.
Tape::NodeId attack_objective(Tape& tape, Tape::NodeId logits, const std::vector<int>& labels,
                              const std::vector<int>* targets, const AttackConfig& cfg) {
  if (!cfg.targeted) {
    auto l = loss_node(tape, logits, labels, cfg.loss);
    return cfg.loss == AttackLoss::cw_margin ? tape.neg(l) : l;
  }
  const std::vector<int>& t = *targets;
  switch (cfg.loss) {
    case AttackLoss::ce:
      // Descend the cross entropy of the target class.
      return tape.neg(ce_graph(tape, logits, t, 1.0, /*mean_reduce=*/false));
    case AttackLoss::cw_margin: {
      // Ascend min(z[t] - max_{j != t} z[j], 0): push the target on top, then stop.
      const Tensor& z = tape.value(logits);
      std::vector<int> best_other(t.size());
      for (int r = 0; r < z.rows(); ++r) {
        best_other[static_cast<std::size_t>(r)] =
            argmax_excluding(z.data() + static_cast<std::size_t>(r) * z.cols(), z.cols(), t[static_cast<std::size_t>(r)]);
      }
      auto margin = tape.sub(tape.gather_cols(logits, t), tape.gather_cols(logits, std::move(best_other)));
      return tape.sum(tape.neg(tape.clamp_min(tape.neg(margin), 0.0)));
    }
    case AttackLoss::dlr:
      throw UsageError("targeted dlr attack is not supported");
  }
  throw UsageError("unknown attack loss");
}

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void check_unit_box(const Tensor& x, const char* who) {
  for (double v : x.vals()) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError(std::string(who) + ": input outside [0, 1]");
  }
}

}  // namespace

Tensor input_gradient(const Model& m, const Tensor& x, int label, AttackLoss kind) {
  check_unit_box(x, "input_gradient");
  if (label < 0 || label >= m.classes) throw IndexError("input_gradient: bad label");
  if (kind == AttackLoss::dlr && m.classes < 3) throw UsageError("dlr loss requires at least 3 classes");
  Tape tape;
  auto xin = tape.input(m.as_batch(x));
  auto tr = m.trace_frozen(tape, xin);
  auto obj = loss_node(tape, tr.logits, {label}, kind);
  tape.backward(obj);
  return tape.grad(xin).reshaped(x.shape());
}

Tensor pgd_batch(const Model& m, const Tensor& x_batch, const std::vector<int>& labels, const AttackConfig& cfg,
                 const std::vector<std::uint64_t>& seeds, const std::vector<int>* targets) {
  cfg.validate(m.classes);
  const Tensor x0 = m.as_batch(x_batch);
  check_unit_box(x0, "pgd");
  const int batch = x0.dim(0);
  if (static_cast<int>(labels.size()) != batch || static_cast<int>(seeds.size()) != batch) {
    throw UsageError("pgd_batch: labels/seeds size mismatch");
  }
  if (cfg.targeted) {
    if (targets == nullptr || static_cast<int>(targets->size()) != batch) {
      throw UsageError("pgd_batch: targeted attack needs one target per sample");
    }
    for (int i = 0; i < batch; ++i) {
      const int t = (*targets)[static_cast<std::size_t>(i)];
      if (t < 0 || t >= m.classes) throw IndexError("pgd_batch: target out of range");
      if (t == labels[static_cast<std::size_t>(i)]) {
        throw UsageError("pgd_batch: target class equals true class for sample " + std::to_string(i));
      }
    }
  }
  if (cfg.eps == 0.0) return x0;

  const std::size_t n = x0.size() / static_cast<std::size_t>(batch);
  Tensor x = x0;
  if (cfg.random_start) {
    for (int i = 0; i < batch; ++i) {
      Rng rng(seeds[static_cast<std::size_t>(i)]);
      double* row = x.data() + static_cast<std::size_t>(i) * n;
      for (std::size_t k = 0; k < n; ++k) row[k] = clip01(row[k] + rng.uniform(-cfg.eps, cfg.eps));
    }
  }
  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    auto xin = tape.input(x);
    auto tr = m.trace_frozen(tape, xin);
    auto obj = attack_objective(tape, tr.logits, labels, targets, cfg);
    tape.backward(obj);
    const Tensor& g = tape.grad(xin);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gv = g[k];
      const double sgn = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
      double v = x[k] + cfg.step_size * sgn;
      const double lo = std::max(0.0, x0[k] - cfg.eps);
      const double hi = std::min(1.0, x0[k] + cfg.eps);
      x[k] = v < lo ? lo : (v > hi ? hi : v);
    }
  }
  return x;
}

Tensor pgd(const Model& m, const Tensor& x, int label, const AttackConfig& cfg) {
  if (cfg.targeted) {
    if (!cfg.target_class) throw UsageError("pgd: targeted attack needs a target class");
    if (*cfg.target_class == label) throw UsageError("pgd: target class equals true class");
  }
  std::vector<int> targets;
  if (cfg.targeted) targets.push_back(*cfg.target_class);
  Tensor adv = pgd_batch(m, m.as_batch(x), {label}, cfg, {cfg.seed}, cfg.targeted ? &targets : nullptr);
  return adv.reshaped(x.shape());
}

GradientDecomposition input_grad_decomposition(const Model& m, const Tensor& x, int label) {
  check_unit_box(x, "input_grad_decomposition");
  if (label < 0 || label >= m.classes) throw IndexError("input_grad_decomposition: bad label");
  GradientDecomposition out;
  const Tensor logits = m.forward_one(x);
  const Tensor probs = softmax_tau(logits, 1.0);
  out.per_class.reserve(static_cast<std::size_t>(m.classes));
  for (int j = 0; j < m.classes; ++j) {
    Tape tape;
    auto xin = tape.input(m.as_batch(x));
    auto tr = m.trace_frozen(tape, xin);
    tape.backward(tape.pick(tr.logits, j));
    const double coeff = (j == label ? probs[static_cast<std::size_t>(j)] - 1.0 : probs[static_cast<std::size_t>(j)]);
    out.per_class.push_back(scale(tape.grad(xin).reshaped(x.shape()), coeff));
  }
  out.total = input_gradient(m, x, label, AttackLoss::ce);
  return out;
}

RobustResult robust_accuracy(const Model& m, const Dataset& ds, const AttackConfig& cfg, TargetRule rule) {
  cfg.validate(m.classes);
  if (rule == TargetRule::fixed && !cfg.target_class) {
    throw UsageError("robust_accuracy: fixed target rule needs a target class");
  }
  RobustResult out;
  out.outcomes.reserve(ds.size());
  const std::size_t n = ds.size();
  constexpr std::size_t kChunk = 128;
  long correct = 0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t end = std::min(n, start + kChunk);
    std::vector<int> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
    Batch b = gather_batch(ds, idx);
    const Tensor clean_logits = m.forward(b.inputs);

    std::vector<std::uint64_t> seeds;
    std::vector<int> targets;
    AttackConfig cc = cfg;
    cc.targeted = rule != TargetRule::none;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      seeds.push_back(cfg.seed ^ static_cast<std::uint64_t>(idx[static_cast<std::size_t>(i)]));
      if (rule != TargetRule::none) {
        const int y = b.labels[i];
        Tensor row({m.classes});
        for (int j = 0; j < m.classes; ++j) row[static_cast<std::size_t>(j)] = clean_logits.at(static_cast<int>(i), j);
        // Fixed rule falls back to the error-prone class when the requested
        // target coincides with the true label.
        if (rule == TargetRule::fixed && *cfg.target_class != y) {
          targets.push_back(*cfg.target_class);
        } else {
          targets.push_back(error_prone_class(softmax_tau(row, 1.0), y));
        }
      }
    }
    const Tensor adv =
        pgd_batch(m, b.inputs, b.labels, cc, seeds, rule != TargetRule::none ? &targets : nullptr);
    const Tensor adv_logits = m.forward(adv);
    const std::size_t sample_elems = shape_numel(ds.sample_shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      SampleOutcome o;
      o.index = idx[i];
      o.label = b.labels[i];
      const double* crow = clean_logits.data() + i * static_cast<std::size_t>(m.classes);
      const double* arow = adv_logits.data() + i * static_cast<std::size_t>(m.classes);
      o.clean_pred = argmax_lowest(crow, m.classes);
      o.adv_pred = argmax_lowest(arow, m.classes);
      o.success = o.adv_pred != o.label;
      double linf = 0.0;
      const double* x0 = b.inputs.data() + i * sample_elems;
      const double* xa = adv.data() + i * sample_elems;
      for (std::size_t k = 0; k < sample_elems; ++k) linf = std::max(linf, std::fabs(xa[k] - x0[k]));
      o.linf = linf;
      if (!o.success) ++correct;
      out.outcomes.push_back(o);
    }
  }
  out.robust_accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

void write_attack_csv(const RobustResult& r, const std::string& path) {
  CsvWriter csv(path);
  csv.row({"sample", "label", "clean_pred", "adv_pred", "success", "linf_dist"});
  for (const SampleOutcome& o : r.outcomes) {
    csv.row({fmt_int(o.index), fmt_int(o.label), fmt_int(o.clean_pred), fmt_int(o.adv_pred),
             o.success ? "1" : "0", fmt_double(o.linf)});
  }
  csv.close();
}

AttackConfig attack_config_from_json(const json& j, int classes) {
  const std::string ctx = "attack spec";
  check_keys(j, {"name", "loss", "eps", "steps", "step_size", "random_start", "targeted", "target", "seed"}, ctx);
  AttackConfig cfg;
  cfg.loss = attack_loss_from_name(get_str_or(j, "loss", "ce", ctx));
  cfg.eps = get_num_or(j, "eps", 8.0 / 255.0, ctx);
  cfg.steps = static_cast<int>(get_int_or(j, "steps", 20, ctx));
  cfg.step_size = get_num_or(j, "step_size", cfg.eps > 0.0 ? cfg.eps / 4.0 : 2.0 / 255.0, ctx);
  cfg.random_start = get_bool_or(j, "random_start", true, ctx);
  cfg.targeted = get_bool_or(j, "targeted", false, ctx);
  if (j.contains("target") && !j.at("target").is_null()) {
    if (j.at("target").is_string()) {
      if (j.at("target").get<std::string>() != "error-prone") {
        throw ConfigError(ctx + ": target must be a class index or \"error-prone\"");
      }
    } else {
      cfg.target_class = static_cast<int>(get_int(j, "target", ctx));
    }
  }
  cfg.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0;
  cfg.validate(classes);
  return cfg;
}

json attack_config_to_json(const AttackConfig& cfg) {
  json j;
  j["loss"] = attack_loss_name(cfg.loss);
  j["eps"] = cfg.eps;
  j["steps"] = cfg.steps;
  j["step_size"] = cfg.step_size;
  j["random_start"] = cfg.random_start;
  j["targeted"] = cfg.targeted;
  if (cfg.target_class) j["target"] = *cfg.target_class;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace tempscale
