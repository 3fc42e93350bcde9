#include "core/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/softmax.hpp"

namespace tempscale {

namespace {

PrototypeGeometry geometry_from_feature(const Tensor& f, const std::vector<Tensor>& protos, int label) {
  const double fn = norm2(f);
  if (fn == 0.0) throw DomainError("prototype geometry: zero-norm feature vector");
  PrototypeGeometry g;
  g.label = label;
  g.euclidean.reserve(protos.size());
  g.cosine.reserve(protos.size());
  for (const Tensor& w : protos) {
    const double wn = norm2(w);
    if (wn == 0.0) throw DomainError("prototype geometry: zero-norm prototype");
    g.euclidean.push_back(norm2(sub(f, w)));
    g.cosine.push_back(dot(f, w) / (fn * wn));
  }
  return g;
}

}  // namespace

PrototypeGeometry prototype_geometry(const Model& m, const Tensor& x, int label) {
  if (label < 0 || label >= m.classes) throw IndexError("prototype_geometry: bad label");
  return geometry_from_feature(m.features_one(x), m.prototypes(), label);
}

int error_prone_class(const Tensor& probs, int label) {
  const int n = static_cast<int>(probs.size());
  if (n < 2) throw UsageError("error_prone_class: need >= 2 classes");
  if (label < 0 || label >= n) throw IndexError("error_prone_class: bad label");
  int best = label == 0 ? 1 : 0;
  for (int j = 0; j < n; ++j) {
    if (j != label && probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(best)]) best = j;
  }
  return best;
}

std::vector<double> normalize_range(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("normalize_range: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DomainError("normalize_range: constant input");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - lo) / (hi - lo));
  return out;
}

DistStats dist_stats(std::vector<double> values) {
  if (values.empty()) throw UsageError("dist_stats: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  DistStats s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  return s;
}

namespace {

double population_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / n;
}

}  // namespace

VarianceSummary variance_summary(const Model& m, const Dataset& ds) {
  if (ds.size() == 0) throw UsageError("variance_summary: empty dataset");
  const std::vector<Tensor> protos = m.prototypes();
  const std::size_t n = ds.size();
  const std::size_t mm = protos.size();

  // All (sample, prototype) Euclidean distances, then one min-max map for
  // the whole model so different models become comparable.
  std::vector<double> all_euclid(n * mm);
  std::vector<double> all_cosine(n * mm);
  for (std::size_t i = 0; i < n; ++i) {
    PrototypeGeometry g = geometry_from_feature(m.features_one(ds.sample(i)), protos, ds.labels[i]);
    for (std::size_t j = 0; j < mm; ++j) {
      all_euclid[i * mm + j] = g.euclidean[j];
      all_cosine[i * mm + j] = g.cosine[j];
    }
  }
  const std::vector<double> norm_euclid = normalize_range(all_euclid);

  VarianceSummary out;
  out.euclid_var.reserve(n);
  out.cosine_var.reserve(n);
  std::vector<double> eneg, cneg;
  for (std::size_t i = 0; i < n; ++i) {
    eneg.clear();
    cneg.clear();
    for (std::size_t j = 0; j < mm; ++j) {
      if (static_cast<int>(j) == ds.labels[i]) continue;
      eneg.push_back(norm_euclid[i * mm + j]);
      cneg.push_back(all_cosine[i * mm + j]);
    }
    out.euclid_var.push_back(population_variance(eneg));
    out.cosine_var.push_back(population_variance(cneg));
  }
  out.euclid_stats = dist_stats(out.euclid_var);
  out.cosine_stats = dist_stats(out.cosine_var);
  return out;
}

LogitShiftRecord logit_shift(const Model& m, const Tensor& x, const Tensor& x_adv, int label) {
  if (label < 0 || label >= m.classes) throw IndexError("logit_shift: bad label");
  LogitShiftRecord r;
  r.label = label;
  r.clean_logits = m.forward_one(x);
  r.adv_logits = m.forward_one(x_adv);
  r.delta = sub(r.adv_logits, r.clean_logits);
  r.error_prone = error_prone_class(softmax_tau(r.clean_logits, 1.0), label);
  r.label_delta = r.delta[static_cast<std::size_t>(label)];
  r.error_prone_delta = r.delta[static_cast<std::size_t>(r.error_prone)];
  return r;
}

LogitShiftAggregate aggregate_logit_shift(const std::vector<LogitShiftRecord>& records) {
  if (records.empty()) throw UsageError("aggregate_logit_shift: no records");
  LogitShiftAggregate a;
  double abs_sum = 0.0;
  std::size_t abs_count = 0;
  for (const LogitShiftRecord& r : records) {
    a.mean_label_delta += r.label_delta;
    a.mean_error_prone_delta += r.error_prone_delta;
    for (double d : r.delta.vals()) {
      abs_sum += std::fabs(d);
      ++abs_count;
    }
  }
  const double n = static_cast<double>(records.size());
  a.mean_label_delta /= n;
  a.mean_error_prone_delta /= n;
  a.mean_abs_delta = abs_sum / static_cast<double>(abs_count);
  return a;
}

void export_features(const Model& m, const Dataset& ds, const std::string& path) {
  CsvWriter csv(path);
  std::vector<std::string> header{"sample", "label"};
  for (int j = 0; j < m.spec.feature_dim; ++j) header.push_back("f" + std::to_string(j));
  csv.row(header);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor f = m.features_one(ds.sample(i));
    std::vector<std::string> row{fmt_int(static_cast<long long>(i)), fmt_int(ds.labels[i])};
    for (double v : f.vals()) row.push_back(fmt_double(v));
    csv.row(row);
  }
  csv.close();
}

void write_geometry_csv(const Model& m, const Dataset& ds, const std::string& path) {
  CsvWriter csv(path);
  csv.row({"sample", "label", "class", "euclidean", "cosine"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    PrototypeGeometry g = prototype_geometry(m, ds.sample(i), ds.labels[i]);
    for (int j = 0; j < m.classes; ++j) {
      csv.row({fmt_int(static_cast<long long>(i)), fmt_int(g.label), fmt_int(j),
               fmt_double(g.euclidean[static_cast<std::size_t>(j)]),
               fmt_double(g.cosine[static_cast<std::size_t>(j)])});
    }
  }
  csv.close();
}

void write_variance_csv(const VarianceSummary& v, const std::string& per_sample_path,
                        const std::string& stats_path) {
  CsvWriter per(per_sample_path);
  per.row({"sample", "euclidean_variance", "cosine_variance"});
  for (std::size_t i = 0; i < v.euclid_var.size(); ++i) {
    per.row({fmt_int(static_cast<long long>(i)), fmt_double(v.euclid_var[i]), fmt_double(v.cosine_var[i])});
  }
  per.close();
  CsvWriter st(stats_path);
  st.row({"metric", "min", "q1", "median", "mean", "q3", "max"});
  auto stat_row = [&](const char* name, const DistStats& s) {
    st.row({name, fmt_double(s.min), fmt_double(s.q1), fmt_double(s.median), fmt_double(s.mean), fmt_double(s.q3),
            fmt_double(s.max)});
  };
  stat_row("euclidean_variance", v.euclid_stats);
  stat_row("cosine_variance", v.cosine_stats);
  st.close();
}

void write_logit_shift_csv(const std::vector<LogitShiftRecord>& records, const std::string& path) {
  CsvWriter csv(path);
  csv.row({"sample", "label", "error_prone_class", "label_delta", "error_prone_delta", "mean_abs_delta"});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const LogitShiftRecord& r = records[i];
    double abs_sum = 0.0;
    for (double d : r.delta.vals()) abs_sum += std::fabs(d);
    csv.row({fmt_int(static_cast<long long>(i)), fmt_int(r.label), fmt_int(r.error_prone),
             fmt_double(r.label_delta), fmt_double(r.error_prone_delta),
             fmt_double(abs_sum / static_cast<double>(r.delta.size()))});
  }
  csv.close();
}

}  // namespace tempscale
