#include "core/softmax.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace tempscale {

namespace {

void check_logits(const Tensor& logits) {
  if (logits.ndim() != 1 || logits.dim(0) < 2) {
    throw UsageError("logits must be a vector of length >= 2, got " + shape_str(logits.shape()));
  }
  if (!logits.all_finite()) throw DomainError("logits must be finite");
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be > 0, got " + std::to_string(tau));
}

void check_label(int label, int classes) {
  if (label < 0 || label >= classes) {
    throw IndexError("class " + std::to_string(label) + " out of range [0, " + std::to_string(classes) + ")");
  }
}

}  // namespace

int argmax_lowest(const double* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

int argmax_lowest(const Tensor& v) { return argmax_lowest(v.data(), static_cast<int>(v.size())); }

Tensor softmax_tau(const Tensor& logits, double tau) {
  check_logits(logits);
  check_tau(tau);
  const int n = logits.dim(0);
  const double m = logits[static_cast<std::size_t>(argmax_lowest(logits))];
  Tensor p({n});
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp((logits[static_cast<std::size_t>(i)] - m) / tau);
    z += p[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] /= z;
  return p;
}

double ce_loss_tau(const Tensor& logits, int label, double tau) {
  check_logits(logits);
  check_tau(tau);
  check_label(label, logits.dim(0));
  const double m = logits[static_cast<std::size_t>(argmax_lowest(logits))];
  double z = 0.0;
  for (int i = 0; i < logits.dim(0); ++i) z += std::exp((logits[static_cast<std::size_t>(i)] - m) / tau);
  return std::log(z) - (logits[static_cast<std::size_t>(label)] - m) / tau;
}

Tensor softmax_tau_rows(const Tensor& logits, double tau) {
  if (logits.ndim() != 2) throw UsageError("expected [B x M] logits, got " + shape_str(logits.shape()));
  check_tau(tau);
  Tensor p = logits;
  const int r = logits.rows(), c = logits.cols();
  for (int i = 0; i < r; ++i) {
    double* row = p.data() + static_cast<std::size_t>(i) * c;
    const double m = row[argmax_lowest(row, c)];
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp((row[j] - m) / tau);
      z += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= z;
  }
  return p;
}

double ce_loss_tau_row(const Tensor& logits, int row, int label, double tau) {
  const int c = logits.cols();
  check_label(label, c);
  const double* v = logits.data() + static_cast<std::size_t>(row) * c;
  const double m = v[argmax_lowest(v, c)];
  double z = 0.0;
  for (int j = 0; j < c; ++j) z += std::exp((v[j] - m) / tau);
  return std::log(z) - (v[label] - m) / tau;
}

Tensor grad_positive_prototype(const Tensor& f_x, const Tensor& probs, int label, double tau) {
  check_tau(tau);
  check_label(label, static_cast<int>(probs.size()));
  return scale(f_x, (probs[static_cast<std::size_t>(label)] - 1.0) / tau);
}

Tensor grad_negative_prototype(const Tensor& f_x, const Tensor& probs, int j, int label, double tau) {
  check_tau(tau);
  check_label(j, static_cast<int>(probs.size()));
  if (j == label) throw UsageError("negative-prototype gradient requires j != label");
  return scale(f_x, probs[static_cast<std::size_t>(j)] / tau);
}

Tensor grad_feature(const Tensor& prototypes, const Tensor& probs, int label, double tau) {
  check_tau(tau);
  if (prototypes.ndim() != 2 || prototypes.cols() != static_cast<int>(probs.size())) {
    throw ShapeError("prototype matrix " + shape_str(prototypes.shape()) + " vs " +
                     std::to_string(probs.size()) + " probabilities");
  }
  check_label(label, prototypes.cols());
  const int d = prototypes.rows(), m = prototypes.cols();
  Tensor g({d});
  for (int j = 0; j < m; ++j) {
    const double coeff = j == label ? probs[static_cast<std::size_t>(j)] - 1.0 : probs[static_cast<std::size_t>(j)];
    for (int i = 0; i < d; ++i) g[static_cast<std::size_t>(i)] += coeff * prototypes.at(i, j);
  }
  for (int i = 0; i < d; ++i) g[static_cast<std::size_t>(i)] /= tau;
  return g;
}

BatchGrads batch_grads(const std::vector<Tensor>& features, const std::vector<int>& labels,
                       const Tensor& prototypes, double tau) {
  if (features.empty()) throw UsageError("batch_grads: empty batch");
  if (features.size() != labels.size()) {
    throw UsageError("batch_grads: " + std::to_string(features.size()) + " features vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const int d = prototypes.rows(), m = prototypes.cols();
  BatchGrads out;
  out.prototype_grads = Tensor({d, m});
  out.feature_grads.reserve(features.size());
  for (std::size_t n = 0; n < features.size(); ++n) {
    const Tensor& f = features[n];
    if (f.ndim() != 1 || f.dim(0) != d) {
      throw ShapeError("batch_grads: feature " + std::to_string(n) + " has shape " + shape_str(f.shape()));
    }
    const int y = labels[n];
    const Tensor logits = matmul(transpose(prototypes), f.reshaped({d, 1})).reshaped({m});
    const Tensor probs = softmax_tau(logits, tau);
    for (int j = 0; j < m; ++j) {
      const Tensor gw = j == y ? grad_positive_prototype(f, probs, y, tau)
                               : grad_negative_prototype(f, probs, j, y, tau);
      for (int i = 0; i < d; ++i) out.prototype_grads.at(i, j) += gw[static_cast<std::size_t>(i)];
    }
    out.feature_grads.push_back(grad_feature(prototypes, probs, y, tau));
  }
  return out;
}

}  // namespace tempscale
