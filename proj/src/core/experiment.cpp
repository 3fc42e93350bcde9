#include "core/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/geometry.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

namespace tempscale {

namespace fs = std::filesystem;

ExperimentConfig experiment_config_from_json(const json& j) {
  const std::string ctx = "experiment config";
  check_keys(j,
             {"version", "master_seed", "dataset", "encoder", "train", "adversarial", "temperatures", "attacks",
              "corruptions"},
             ctx);
  ExperimentConfig c;
  c.version = static_cast<int>(get_int(j, "version", ctx));
  if (c.version != 1) throw ConfigError(ctx + ": unsupported version " + std::to_string(c.version));
  c.master_seed = require_key(j, "master_seed", ctx).get<std::uint64_t>();
  c.dataset = require_key(j, "dataset", ctx);
  // Validate the dataset spec keys up front without generating anything.
  const std::string dtype = get_str(c.dataset, "type", "dataset spec");
  if (dtype == "blobs") {
    check_keys(c.dataset,
               {"type", "classes", "dim", "train_per_class", "test_per_class", "separation", "noise", "seed"},
               "dataset spec");
  } else if (dtype == "blob-images") {
    check_keys(c.dataset, {"type", "classes", "height", "width", "train_per_class", "test_per_class", "noise", "seed"},
               "dataset spec");
  } else if (dtype == "idx") {
    check_keys(c.dataset, {"type", "train_images", "train_labels", "test_images", "test_labels"}, "dataset spec");
  } else {
    throw ConfigError("dataset spec: unknown type '" + dtype + "'");
  }
  c.encoder = require_key(j, "encoder", ctx);
  check_keys(c.encoder, {"kind", "hidden", "channels", "feature_dim"}, "encoder spec");
  if (j.contains("train")) {
    c.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("adversarial") && !j.at("adversarial").is_null()) {
    c.adversarial = true;
    const json& a = j.at("adversarial");
    check_keys(a, {"steps", "eps", "step_size", "random_start"}, "adversarial spec");
    c.inner.steps = static_cast<int>(get_int_or(a, "steps", 10, ctx));
    c.inner.eps = get_num_or(a, "eps", 8.0 / 255.0, ctx);
    c.inner.step_size = get_num_or(a, "step_size", 2.0 / 255.0, ctx);
    c.inner.random_start = get_bool_or(a, "random_start", true, ctx);
  }
  const json& temps = require_key(j, "temperatures", ctx);
  if (!temps.is_array() || temps.empty()) throw ConfigError(ctx + ": temperatures must be a nonempty array");
  for (const json& t : temps) {
    if (!t.is_number() || !(t.get<double>() > 0.0)) throw ConfigError(ctx + ": temperatures must be > 0");
    c.temperatures.push_back(t.get<double>());
  }
  if (j.contains("attacks")) {
    for (const json& a : j.at("attacks")) {
      SweepAttack sa;
      sa.name = get_str_or(a, "name", "attack" + std::to_string(c.attacks.size()), "attack spec");
      attack_config_from_json(a, /*classes=*/1000);  // validates keys and values
      sa.spec = a;
      c.attacks.push_back(std::move(sa));
    }
  }
  if (j.contains("corruptions") && !j.at("corruptions").is_null()) {
    const json& co = j.at("corruptions");
    check_keys(co, {"kinds", "severity"}, "corruption spec");
    c.corruption_severity = static_cast<int>(get_int_or(co, "severity", 3, ctx));
    if (c.corruption_severity < 1 || c.corruption_severity > 5) {
      throw ConfigError("corruption spec: severity must be in 1..5");
    }
    if (co.contains("kinds")) {
      for (const json& k : co.at("kinds")) {
        corruption_kind_from_name(k.get<std::string>());  // validates
        c.corruption_kinds.push_back(k.get<std::string>());
      }
    }
  }
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = c.version;
  j["master_seed"] = c.master_seed;
  j["dataset"] = c.dataset;
  j["encoder"] = c.encoder;
  j["train"] = train_config_to_json(c.train);
  if (c.adversarial) {
    json a;
    a["steps"] = c.inner.steps;
    a["eps"] = c.inner.eps;
    a["step_size"] = c.inner.step_size;
    a["random_start"] = c.inner.random_start;
    j["adversarial"] = a;
  }
  j["temperatures"] = c.temperatures;
  if (!c.attacks.empty()) {
    json arr = json::array();
    for (const SweepAttack& a : c.attacks) arr.push_back(a.spec);
    j["attacks"] = arr;
  }
  if (!c.corruption_kinds.empty() || c.corruption_severity != 3) {
    json co;
    if (!c.corruption_kinds.empty()) co["kinds"] = c.corruption_kinds;
    co["severity"] = c.corruption_severity;
    j["corruptions"] = co;
  }
  return j;
}

namespace {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace

std::string config_hash(const json& j) { return hex64(fnv1a64(j.dump())); }

EncoderSpec make_encoder(const json& encoder_json, const Shape& sample_shape) {
  const std::string ctx = "encoder spec";
  EncoderSpec s;
  s.kind = encoder_kind_from_name(get_str_or(encoder_json, "kind", "mlp", ctx));
  s.feature_dim = static_cast<int>(get_int_or(encoder_json, "feature_dim", 64, ctx));
  if (s.kind == EncoderKind::mlp) {
    Shape flat{static_cast<int>(shape_numel(sample_shape))};
    s.input_shape = flat;
    s.hidden = encoder_json.contains("hidden") ? encoder_json.at("hidden").get<std::vector<int>>()
                                               : std::vector<int>{256, 128};
  } else {
    if (sample_shape.size() != 3) {
      throw ConfigError("small-cnn encoder needs image-shaped data, got sample shape " + shape_str(sample_shape));
    }
    s.input_shape = sample_shape;
    s.channels = encoder_json.contains("channels") ? encoder_json.at("channels").get<std::vector<int>>()
                                                   : std::vector<int>{8, 16};
  }
  s.validate();
  return s;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

SplitDataset generate_dataset(const ExperimentConfig& cfg) {
  json spec = cfg.dataset;
  // Blob datasets without an explicit seed draw it from the master seed.
  if (spec.at("type") != "idx" && !spec.contains("seed")) {
    spec["seed"] = derive_seed(cfg.master_seed, "dataset");
  }
  return dataset_from_json(spec, cfg.cache_dir);
}

TrainResult train_entry(const ExperimentConfig& cfg, const EncoderSpec& enc, const SplitDataset& data, double tau,
                        std::uint64_t entry_index) {
  if (cfg.adversarial) {
    ATConfig at;
    static_cast<TrainConfig&>(at) = cfg.train;
    at.inner = cfg.inner;
    at.tau = tau;
    at.seed = derive_seed(cfg.master_seed, "train", entry_index);
    at.dataset_id = data.train.name;
    return train_adversarial(at, enc, data);
  }
  TrainConfig tc = cfg.train;
  tc.tau = tau;
  tc.seed = derive_seed(cfg.master_seed, "train", entry_index);
  tc.dataset_id = data.train.name;
  return train_standard(tc, enc, data);
}

std::vector<CorruptionKind> corruption_kinds_for(const ExperimentConfig& cfg, const Dataset& ds) {
  if (cfg.corruption_kinds.empty()) return all_corruption_kinds(ds.sample_shape.size() == 3);
  std::vector<CorruptionKind> kinds;
  for (const std::string& k : cfg.corruption_kinds) kinds.push_back(corruption_kind_from_name(k));
  return kinds;
}

struct ManifestBuilder {
  json files = json::array();

  void add(const std::string& root, const std::string& rel) {
    json f;
    f["path"] = rel;
    f["fnv1a64"] = hex64(fnv1a64(read_text_file(root + "/" + rel)));
    files.push_back(std::move(f));
  }
};

}  // namespace

void run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const SplitDataset data = generate_dataset(cfg);
  const EncoderSpec enc = make_encoder(cfg.encoder, data.train.sample_shape);
  TrainResult res = train_entry(cfg, enc, data, cfg.temperatures.front(), 0);
  res.model.dataset_spec_json = cfg.dataset.contains("seed") || cfg.dataset.at("type") == "idx"
                                    ? cfg.dataset.dump()
                                    : [&] {
                                        json s = cfg.dataset;
                                        s["seed"] = derive_seed(cfg.master_seed, "dataset");
                                        return s.dump();
                                      }();
  save_model(res.model, out_dir + "/model.json");
  write_epoch_csv(res.records, out_dir + "/epochs.csv");
}

void run_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const SplitDataset data = generate_dataset(cfg);
  const EncoderSpec enc = make_encoder(cfg.encoder, data.train.sample_shape);
  const std::vector<CorruptionKind> kinds = corruption_kinds_for(cfg, data.test);

  json dataset_spec_used = cfg.dataset;
  if (dataset_spec_used.at("type") != "idx" && !dataset_spec_used.contains("seed")) {
    dataset_spec_used["seed"] = derive_seed(cfg.master_seed, "dataset");
  }

  ManifestBuilder manifest;
  std::vector<std::vector<std::string>> summary_rows;

  for (std::size_t ti = 0; ti < cfg.temperatures.size(); ++ti) {
    const double tau = cfg.temperatures[ti];
    const std::string sub = "tau_" + fmt_double(tau);
    ensure_dir(out_dir + "/" + sub);

    TrainResult res = train_entry(cfg, enc, data, tau, ti);
    res.model.dataset_spec_json = dataset_spec_used.dump();
    save_model(res.model, out_dir + "/" + sub + "/model.json");
    write_epoch_csv(res.records, out_dir + "/" + sub + "/epochs.csv");
    manifest.add(out_dir, sub + "/model.json");
    manifest.add(out_dir, sub + "/epochs.csv");

    const EvalResult clean = evaluate(res.model, data.test);
    std::vector<std::string> row{fmt_double(tau), fmt_double(clean.accuracy)};

    const CorruptionResult corr = corrupted_accuracy(res.model, data.test, kinds, cfg.corruption_severity,
                                                     derive_seed(cfg.master_seed, "corruption", ti));
    write_corruption_csv(corr, cfg.corruption_severity, out_dir + "/" + sub + "/corruption.csv");
    manifest.add(out_dir, sub + "/corruption.csv");
    row.push_back(fmt_double(corr.mean_accuracy));

    std::vector<LogitShiftRecord> shift_records;
    for (std::size_t ai = 0; ai < cfg.attacks.size(); ++ai) {
      json aspec = cfg.attacks[ai].spec;
      aspec["seed"] = derive_seed(cfg.master_seed, "attack-" + cfg.attacks[ai].name, ti);
      const AttackConfig ac = attack_config_from_json(aspec, res.model.classes);
      TargetRule rule = TargetRule::none;
      if (ac.targeted) {
        rule = ac.target_class ? TargetRule::fixed : TargetRule::error_prone;
      }
      const RobustResult rr = robust_accuracy(res.model, data.test, ac, rule);
      const std::string rel = sub + "/attack_" + cfg.attacks[ai].name + ".csv";
      write_attack_csv(rr, out_dir + "/" + rel);
      manifest.add(out_dir, rel);
      row.push_back(fmt_double(rr.robust_accuracy));

      // Logit-shift analysis follows the first configured attack.
      if (ai == 0) {
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < data.test.size(); ++i) seeds.push_back(ac.seed ^ i);
        const Tensor adv = pgd_batch(res.model, data.test.samples, data.test.labels, ac, seeds);
        const std::size_t elems = shape_numel(data.test.sample_shape);
        for (std::size_t i = 0; i < data.test.size(); ++i) {
          Tensor xa(data.test.sample_shape);
          std::copy_n(adv.data() + i * elems, elems, xa.data());
          shift_records.push_back(logit_shift(res.model, data.test.sample(i), xa, data.test.labels[i]));
        }
      }
    }
    if (!shift_records.empty()) {
      write_logit_shift_csv(shift_records, out_dir + "/" + sub + "/logit_shift.csv");
      manifest.add(out_dir, sub + "/logit_shift.csv");
    }

    const VarianceSummary var = variance_summary(res.model, data.test);
    write_variance_csv(var, out_dir + "/" + sub + "/variance.csv", out_dir + "/" + sub + "/variance_stats.csv");
    write_geometry_csv(res.model, data.test, out_dir + "/" + sub + "/geometry.csv");
    export_features(res.model, data.test, out_dir + "/" + sub + "/features.csv");
    manifest.add(out_dir, sub + "/variance.csv");
    manifest.add(out_dir, sub + "/variance_stats.csv");
    manifest.add(out_dir, sub + "/geometry.csv");
    manifest.add(out_dir, sub + "/features.csv");

    row.push_back(fmt_int(res.records.back().test_errors));
    summary_rows.push_back(std::move(row));
  }

  CsvWriter summary(out_dir + "/summary.csv");
  std::vector<std::string> header{"tau", "clean_acc", "corrupted_acc"};
  for (const SweepAttack& a : cfg.attacks) header.push_back(a.name + "_acc");
  header.push_back("final_test_errors");
  summary.row(header);
  for (const auto& row : summary_rows) summary.row(row);
  summary.close();
  manifest.add(out_dir, "summary.csv");

  json mj;
  mj["format"] = "tempscale-manifest";
  mj["version"] = 1;
  const json cj = experiment_config_to_json(cfg);
  mj["config"] = cj;
  mj["config_hash"] = config_hash(cj);
  mj["master_seed"] = cfg.master_seed;
  mj["files"] = manifest.files;
  write_text_file(out_dir + "/manifest.json", mj.dump(1) + "\n");
}

SplitDataset resolve_dataset(const std::string& dataset_json, const Model& m, const std::string& cache_dir) {
  if (!dataset_json.empty()) {
    return dataset_from_json(parse_json(dataset_json, "dataset spec"), cache_dir);
  }
  if (m.dataset_spec_json.empty()) {
    throw ConfigError("model file carries no dataset spec; pass one explicitly");
  }
  return dataset_from_json(parse_json(m.dataset_spec_json, "model dataset spec"), cache_dir);
}

double run_attack_eval(const std::string& model_path, const std::string& dataset_json,
                       const std::string& attack_json, const std::string& cache_dir, const std::string& out_csv) {
  const Model m = load_model(model_path);
  const SplitDataset data = resolve_dataset(dataset_json, m, cache_dir);
  const json aj = parse_json(attack_json.empty() ? "{}" : attack_json, "attack spec");
  const AttackConfig ac = attack_config_from_json(aj, m.classes);
  TargetRule rule = TargetRule::none;
  if (ac.targeted) rule = ac.target_class ? TargetRule::fixed : TargetRule::error_prone;
  const RobustResult rr = robust_accuracy(m, data.test, ac, rule);
  if (!out_csv.empty()) write_attack_csv(rr, out_csv);
  return rr.robust_accuracy;
}

double run_corrupt_eval(const std::string& model_path, const std::string& dataset_json,
                        const std::string& corruption_json, const std::string& cache_dir,
                        const std::string& out_csv) {
  const Model m = load_model(model_path);
  const SplitDataset data = resolve_dataset(dataset_json, m, cache_dir);
  const json cj = parse_json(corruption_json.empty() ? "{}" : corruption_json, "corruption spec");
  check_keys(cj, {"kinds", "severity", "seed"}, "corruption spec");
  const int severity = static_cast<int>(get_int_or(cj, "severity", 3, "corruption spec"));
  std::vector<CorruptionKind> kinds;
  if (cj.contains("kinds")) {
    for (const json& k : cj.at("kinds")) kinds.push_back(corruption_kind_from_name(k.get<std::string>()));
  } else {
    kinds = all_corruption_kinds(data.test.sample_shape.size() == 3);
  }
  const std::uint64_t seed = cj.contains("seed") ? cj.at("seed").get<std::uint64_t>() : 0;
  const CorruptionResult r = corrupted_accuracy(m, data.test, kinds, severity, seed);
  if (!out_csv.empty()) write_corruption_csv(r, severity, out_csv);
  return r.mean_accuracy;
}

void run_analyze(const std::string& model_path, const std::string& dataset_json, const std::string& options_json,
                 const std::string& cache_dir, const std::string& out_dir) {
  const Model m = load_model(model_path);
  const SplitDataset data = resolve_dataset(dataset_json, m, cache_dir);
  const json oj = parse_json(options_json.empty() ? "{}" : options_json, "analyze options");
  check_keys(oj, {"attack"}, "analyze options");
  json aj = oj.contains("attack") ? oj.at("attack") : json::object();
  const AttackConfig ac = attack_config_from_json(aj, m.classes);

  ensure_dir(out_dir);
  write_geometry_csv(m, data.test, out_dir + "/geometry.csv");
  const VarianceSummary var = variance_summary(m, data.test);
  write_variance_csv(var, out_dir + "/variance.csv", out_dir + "/variance_stats.csv");
  export_features(m, data.test, out_dir + "/features.csv");

  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < data.test.size(); ++i) seeds.push_back(ac.seed ^ i);
  const Tensor adv = pgd_batch(m, data.test.samples, data.test.labels, ac, seeds);
  const std::size_t elems = shape_numel(data.test.sample_shape);
  std::vector<LogitShiftRecord> records;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    Tensor xa(data.test.sample_shape);
    std::copy_n(adv.data() + i * elems, elems, xa.data());
    records.push_back(logit_shift(m, data.test.sample(i), xa, data.test.labels[i]));
  }
  write_logit_shift_csv(records, out_dir + "/logit_shift.csv");
}

}  // namespace tempscale
