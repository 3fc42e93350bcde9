#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace tempscale {

// Temperature softmax, temperature cross-entropy, and the closed-form
// prototype/feature gradients of that loss. Everything here is a pure
// function and deliberately independent of the autodiff engine so the two
// can be cross-checked against each other.

// Lowest index wins ties; the convention shared by evaluation and attacks.
int argmax_lowest(const double* v, int n);
int argmax_lowest(const Tensor& v);

// exp((x - max(x)) / tau), normalized. Stable down to tau ~ 0.05.
Tensor softmax_tau(const Tensor& logits, double tau);

// -log softmax_tau(logits, tau)[label], computed in log space.
double ce_loss_tau(const Tensor& logits, int label, double tau);

// Row-wise variants over a [B x M] logit matrix.
Tensor softmax_tau_rows(const Tensor& logits, double tau);
double ce_loss_tau_row(const Tensor& logits, int row, int label, double tau);

// d loss / d w_label = (1/tau) (P[label] - 1) f(x)
Tensor grad_positive_prototype(const Tensor& f_x, const Tensor& probs, int label, double tau);

// d loss / d w_j = (1/tau) P[j] f(x), j != label
Tensor grad_negative_prototype(const Tensor& f_x, const Tensor& probs, int j, int label, double tau);

// d loss / d f = (1/tau) [ sum_{j != label} w_j P[j] - w_label (1 - P[label]) ]
// prototypes is the d x M matrix whose columns are the class prototypes.
Tensor grad_feature(const Tensor& prototypes, const Tensor& probs, int label, double tau);

struct BatchGrads {
  Tensor prototype_grads;             // d x M, summed over the batch
  std::vector<Tensor> feature_grads;  // per sample, in index order
};

// Exact sums of the per-sample gradients above, in index order.
BatchGrads batch_grads(const std::vector<Tensor>& features, const std::vector<int>& labels,
                       const Tensor& prototypes, double tau);

}  // namespace tempscale
