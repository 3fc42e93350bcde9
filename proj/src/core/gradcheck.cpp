#include "core/gradcheck.hpp"

#include <algorithm>

#include "core/csv.hpp"
#include "core/loss_graph.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

namespace tempscale {

namespace {

constexpr double kClosedTol = 1e-10;
constexpr double kFdTol = 1e-6;
constexpr double kFdStep = 1e-5;
constexpr double kTauGrid[5] = {0.1, 0.5, 1.0, 10.0, 100.0};

Tensor closed_form_prototype_grads(const Tensor& f, const Tensor& w, int y, double tau) {
  const int d = w.rows(), m = w.cols();
  const Tensor logits = matmul(f.reshaped({1, d}), w).reshaped({m});
  const Tensor probs = softmax_tau(logits, tau);
  Tensor gw({d, m});
  for (int j = 0; j < m; ++j) {
    const Tensor col = j == y ? grad_positive_prototype(f, probs, y, tau)
                              : grad_negative_prototype(f, probs, j, y, tau);
    for (int i = 0; i < d; ++i) gw.at(i, j) = col[static_cast<std::size_t>(i)];
  }
  return gw;
}

}  // namespace

std::string GradCheckReport::summary() const {
  return std::string(pass ? "PASS" : "FAIL") + ": " + std::to_string(instances) +
         " instances; closed-form vs autodiff max rel err " + fmt_double(max_err_closed_vs_autodiff) +
         " (tol " + fmt_double(kClosedTol) + "); autodiff vs finite differences max rel err " +
         fmt_double(max_err_autodiff_vs_fd) + " (tol " + fmt_double(kFdTol) + ")";
}

GradCheckReport run_grad_check(std::uint64_t seed, int instances) {
  GradCheckReport rep;
  rep.instances = instances;

  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(derive_seed(seed, "grad-check", static_cast<std::uint64_t>(inst)));
    const int m = 2 + static_cast<int>(rng.below(9));   // classes in [2, 10]
    const int d = 2 + static_cast<int>(rng.below(15));  // feature dim in [2, 16]
    const double tau = kTauGrid[rng.below(5)];
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));

    Tensor f({d});
    for (double& v : f.vals()) v = rng.uniform(-1.0, 1.0);
    Tensor w({d, m});
    for (double& v : w.vals()) v = rng.uniform(-1.0, 1.0);

    // Single sample: closed form vs autodiff vs finite differences.
    const Tensor gw_closed = closed_form_prototype_grads(f, w, y, tau);
    const Tensor logits = matmul(f.reshaped({1, d}), w).reshaped({m});
    const Tensor gf_closed = grad_feature(w, softmax_tau(logits, tau), y, tau);

    Tape tape;
    auto wn = tape.input(w);
    auto fn = tape.input(f.reshaped({1, d}));
    auto loss = ce_graph(tape, tape.matmul(fn, wn), {y}, tau, /*mean_reduce=*/false);
    tape.backward(loss);
    const Tensor gw_auto = tape.grad(wn);
    const Tensor gf_auto = tape.grad(fn).reshaped({d});

    rep.max_err_closed_vs_autodiff =
        std::max({rep.max_err_closed_vs_autodiff, max_rel_err(gw_closed, gw_auto), max_rel_err(gf_closed, gf_auto)});

    const Tensor gw_fd = finite_diff_grad(
        [&](const Tensor& wt) {
          return ce_loss_tau(matmul(f.reshaped({1, d}), wt).reshaped({m}), y, tau);
        },
        w, kFdStep);
    const Tensor gf_fd = finite_diff_grad(
        [&](const Tensor& ft) {
          return ce_loss_tau(matmul(ft.reshaped({1, d}), w).reshaped({m}), y, tau);
        },
        f, kFdStep);
    rep.max_err_autodiff_vs_fd =
        std::max({rep.max_err_autodiff_vs_fd, max_rel_err(gw_auto, gw_fd), max_rel_err(gf_auto, gf_fd)});

    // Batch: summed per-sample gradients vs autodiff of the summed loss.
    const int batch = 2 + static_cast<int>(rng.below(7));
    std::vector<Tensor> features;
    std::vector<int> labels;
    for (int s = 0; s < batch; ++s) {
      Tensor fs({d});
      for (double& v : fs.vals()) v = rng.uniform(-1.0, 1.0);
      features.push_back(std::move(fs));
      labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(m))));
    }
    const BatchGrads bg = batch_grads(features, labels, w, tau);

    Tape btape;
    auto bwn = btape.input(w);
    std::vector<Tape::NodeId> fnodes;
    Tape::NodeId total = -1;
    for (int s = 0; s < batch; ++s) {
      fnodes.push_back(btape.input(features[static_cast<std::size_t>(s)].reshaped({1, d})));
      auto l = ce_graph(btape, btape.matmul(fnodes.back(), bwn), {labels[static_cast<std::size_t>(s)]}, tau, false);
      total = s == 0 ? l : btape.add(total, l);
    }
    btape.backward(total);
    rep.max_err_closed_vs_autodiff =
        std::max(rep.max_err_closed_vs_autodiff, max_rel_err(bg.prototype_grads, btape.grad(bwn)));
    for (int s = 0; s < batch; ++s) {
      rep.max_err_closed_vs_autodiff =
          std::max(rep.max_err_closed_vs_autodiff,
                   max_rel_err(bg.feature_grads[static_cast<std::size_t>(s)],
                               btape.grad(fnodes[static_cast<std::size_t>(s)]).reshaped({d})));
    }

    const Tensor bgw_fd = finite_diff_grad(
        [&](const Tensor& wt) {
          double total_loss = 0.0;
          for (int s = 0; s < batch; ++s) {
            total_loss += ce_loss_tau(
                matmul(features[static_cast<std::size_t>(s)].reshaped({1, d}), wt).reshaped({m}),
                labels[static_cast<std::size_t>(s)], tau);
          }
          return total_loss;
        },
        w, kFdStep);
    rep.max_err_autodiff_vs_fd = std::max(rep.max_err_autodiff_vs_fd, max_rel_err(bg.prototype_grads, bgw_fd));
  }

  rep.pass = rep.max_err_closed_vs_autodiff <= kClosedTol && rep.max_err_autodiff_vs_fd <= kFdTol;
  return rep;
}

}  // namespace tempscale
