#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/autodiff.hpp"
#include "core/errors.hpp"
#include "core/loss_graph.hpp"
#include "core/rng.hpp"
#include "core/softmax.hpp"

using namespace tempscale;

namespace {

// Values frozen from 40-digit arbitrary-precision evaluation.
constexpr double kP0Tau1 = 0.73105857863000487925;
constexpr double kP1Tau1 = 0.26894142136999512075;
constexpr double kP0Tau01 = 0.99995460213129756561;
constexpr double kP1Tau01 = 4.5397868702434394505e-05;
constexpr double kCeTau1 = 0.31326168751822283405;

Tensor random_logits(Rng& rng, int m, double magnitude) {
  Tensor t({m});
  for (double& v : t.vals()) v = rng.uniform(-magnitude, magnitude);
  return t;
}

}  // namespace

TEST_CASE("softmax of constant logits is uniform at any temperature") {
  for (double tau : {0.1, 1.0, 50.0, 1e9}) {
    const Tensor p = softmax_tau(Tensor::vec({3.7, 3.7, 3.7}), tau);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("softmax frozen two-logit values") {
  const Tensor p1 = softmax_tau(Tensor::vec({1.0, 0.0}), 1.0);
  CHECK(p1[0] == doctest::Approx(kP0Tau1).epsilon(1e-14));
  CHECK(p1[1] == doctest::Approx(kP1Tau1).epsilon(1e-14));

  const Tensor p01 = softmax_tau(Tensor::vec({1.0, 0.0}), 0.1);
  CHECK(p01[0] == doctest::Approx(kP0Tau01).epsilon(1e-14));
  CHECK(p01[1] == doctest::Approx(kP1Tau01).epsilon(1e-12));
}

TEST_CASE("softmax approaches the uniform limit for huge temperatures") {
  const Tensor p = softmax_tau(Tensor::vec({5.0, -3.0, 7.0}), 1e9);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(p[i] - 1.0 / 3.0) <= 1e-8);
}

TEST_CASE("softmax approaches one-hot for tiny temperatures") {
  const Tensor p = softmax_tau(Tensor::vec({1.0, 0.2, 0.1}), 1e-3);
  CHECK(p[0] >= 1.0 - 1e-10);
  CHECK(p[1] <= 1e-10);
}

TEST_CASE("softmax domain errors") {
  CHECK_THROWS_AS(softmax_tau(Tensor::vec({1.0, 0.0}), 0.0), DomainError);
  CHECK_THROWS_AS(softmax_tau(Tensor::vec({1.0, 0.0}), -2.0), DomainError);
  CHECK_THROWS_AS(softmax_tau(Tensor::vec({1.0}), 1.0), UsageError);
}

TEST_CASE("cross entropy: uniform logits give log(M)") {
  for (int m : {2, 5, 10}) {
    Tensor x({m});
    for (double& v : x.vals()) v = 0.42;
    CHECK(ce_loss_tau(x, m - 1, 3.0) == doctest::Approx(std::log(static_cast<double>(m))).epsilon(1e-14));
  }
}

TEST_CASE("cross entropy frozen value and tau=1 identity") {
  CHECK(ce_loss_tau(Tensor::vec({1.0, 0.0}), 0, 1.0) == doctest::Approx(kCeTau1).epsilon(1e-14));
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = random_logits(rng, 6, 5.0);
    const int y = static_cast<int>(rng.below(6));
    const double direct = -std::log(softmax_tau(x, 1.0)[static_cast<std::size_t>(y)]);
    CHECK(ce_loss_tau(x, y, 1.0) == doctest::Approx(direct).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ce_loss_tau(Tensor::vec({1.0, 0.0}), 2, 1.0), IndexError);
}

TEST_CASE("cross entropy stays finite at extreme logits and small tau") {
  CHECK(std::isfinite(ce_loss_tau(Tensor::vec({100.0, -100.0, 50.0}), 1, 0.1)));
  CHECK(std::isfinite(ce_loss_tau(Tensor::vec({100.0, -100.0, 50.0}), 0, 1e9)));
}

TEST_CASE("positive-prototype gradient") {
  const Tensor f = Tensor::vec({0.5, -1.5});
  SUBCASE("vanishes at perfect confidence") {
    const Tensor g = grad_positive_prototype(f, Tensor::vec({1.0, 0.0}), 0, 0.7);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
  }
  SUBCASE("frozen scalar case") {
    const Tensor g = grad_positive_prototype(Tensor::vec({1.0}), softmax_tau(Tensor::vec({1.0, 0.0}), 1.0), 0, 1.0);
    CHECK(g[0] == doctest::Approx(-kP1Tau1).epsilon(1e-14));
  }
}

TEST_CASE("negative-prototype gradient") {
  SUBCASE("frozen scalar case") {
    const Tensor g = grad_negative_prototype(Tensor::vec({1.0}), softmax_tau(Tensor::vec({1.0, 0.0}), 1.0), 1, 0,
                                             1.0);
    CHECK(g[0] == doctest::Approx(kP1Tau1).epsilon(1e-14));
  }
  SUBCASE("vanishing probability gives vanishing gradient") {
    // P underflows to 0 for a 100-logit gap at tau=0.1.
    const Tensor p = softmax_tau(Tensor::vec({100.0, 0.0}), 0.1);
    const Tensor g = grad_negative_prototype(Tensor::vec({2.0, 3.0}), p, 1, 0, 0.1);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::fabs(g[i]) <= 1e-300);
  }
  SUBCASE("rejects j == y") {
    CHECK_THROWS_AS(grad_negative_prototype(Tensor::vec({1.0}), Tensor::vec({0.5, 0.5}), 1, 1, 1.0), UsageError);
  }
}

TEST_CASE("prototype gradients sum to zero across classes") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 2 + static_cast<int>(rng.below(8));
    const int d = 2 + static_cast<int>(rng.below(8));
    Tensor f({d});
    for (double& v : f.vals()) v = rng.uniform(-1, 1);
    const Tensor p = softmax_tau(random_logits(rng, m, 3.0), 0.5);
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    Tensor total({d});
    for (int j = 0; j < m; ++j) {
      const Tensor g =
          j == y ? grad_positive_prototype(f, p, y, 0.5) : grad_negative_prototype(f, p, j, y, 0.5);
      for (int i = 0; i < d; ++i) total[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < d; ++i) CHECK(std::fabs(total[static_cast<std::size_t>(i)]) <= 1e-14);
  }
}

TEST_CASE("feature gradient") {
  SUBCASE("vanishes at perfect confidence") {
    Tensor w({3, 2}, {1, 2, 3, 4, 5, 6});
    const Tensor g = grad_feature(w, Tensor::vec({0.0, 1.0}), 1, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
  }
  SUBCASE("equal negative probabilities give the uniform prototype mixture") {
    // 3 classes, negatives share probability (1 - py)/2 each.
    const double py = 0.4;
    Tensor w({2, 3}, {1, 0, 2, 0, 1, -1});
    const Tensor p = Tensor::vec({py, 0.3, 0.3});
    const Tensor g = grad_feature(w, p, 0, 1.0);
    // Expected: (1-py)/(M-1) * sum_neg w_j - w_y (1-py), all over tau=1.
    Tensor expect({2});
    for (int i = 0; i < 2; ++i) {
      const double neg_sum = w.at(i, 1) + w.at(i, 2);
      expect[static_cast<std::size_t>(i)] = (1 - py) / 2.0 * neg_sum - w.at(i, 0) * (1 - py);
    }
    CHECK(max_rel_err(g, expect) <= 1e-15);
  }
}

TEST_CASE("closed-form gradients match autodiff on random instances") {
  Rng rng(23);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int m = 2 + static_cast<int>(rng.below(9));
    const int d = 2 + static_cast<int>(rng.below(15));
    const double tau = std::vector<double>{0.1, 0.5, 1.0, 10.0, 100.0}[rng.below(5)];
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    Tensor f({d}), w({d, m});
    for (double& v : f.vals()) v = rng.uniform(-1, 1);
    for (double& v : w.vals()) v = rng.uniform(-1, 1);

    Tape tape;
    auto fn = tape.input(f.reshaped({1, d}));
    auto wn = tape.input(w);
    tape.backward(ce_graph(tape, tape.matmul(fn, wn), {y}, tau, false));

    const Tensor logits = matmul(f.reshaped({1, d}), w).reshaped({m});
    const Tensor p = softmax_tau(logits, tau);
    const Tensor& gw = tape.grad(wn);
    for (int j = 0; j < m; ++j) {
      const Tensor gj = j == y ? grad_positive_prototype(f, p, y, tau) : grad_negative_prototype(f, p, j, y, tau);
      Tensor col({d});
      for (int i = 0; i < d; ++i) col[static_cast<std::size_t>(i)] = gw.at(i, j);
      worst = std::max(worst, max_rel_err(gj, col));
    }
    worst = std::max(worst, max_rel_err(grad_feature(w, p, y, tau), tape.grad(fn).reshaped({d})));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("batch gradients") {
  Tensor w({3, 4});
  Rng rng(31);
  for (double& v : w.vals()) v = rng.uniform(-1, 1);
  Tensor f({3});
  for (double& v : f.vals()) v = rng.uniform(-1, 1);

  SUBCASE("singleton batch equals per-sample operations") {
    const BatchGrads bg = batch_grads({f}, {2}, w, 0.7);
    const Tensor logits = matmul(f.reshaped({1, 3}), w).reshaped({4});
    const Tensor p = softmax_tau(logits, 0.7);
    for (int j = 0; j < 4; ++j) {
      const Tensor gj = j == 2 ? grad_positive_prototype(f, p, 2, 0.7) : grad_negative_prototype(f, p, j, 2, 0.7);
      for (int i = 0; i < 3; ++i) CHECK(bg.prototype_grads.at(i, j) == gj[static_cast<std::size_t>(i)]);
    }
    CHECK(max_rel_err(bg.feature_grads[0], grad_feature(w, p, 2, 0.7)) == 0.0);
  }

  SUBCASE("duplicated sample doubles the summed gradient exactly") {
    const BatchGrads one = batch_grads({f}, {1}, w, 1.0);
    const BatchGrads two = batch_grads({f, f}, {1, 1}, w, 1.0);
    for (std::size_t i = 0; i < one.prototype_grads.size(); ++i) {
      CHECK(two.prototype_grads[i] == 2.0 * one.prototype_grads[i]);
    }
  }

  SUBCASE("random batch matches autodiff of the summed loss") {
    std::vector<Tensor> features;
    std::vector<int> labels;
    for (int s = 0; s < 8; ++s) {
      Tensor fs({3});
      for (double& v : fs.vals()) v = rng.uniform(-1, 1);
      features.push_back(std::move(fs));
      labels.push_back(static_cast<int>(rng.below(4)));
    }
    const BatchGrads bg = batch_grads(features, labels, w, 10.0);
    Tape tape;
    auto wn = tape.input(w);
    Tape::NodeId total = -1;
    for (int s = 0; s < 8; ++s) {
      auto fn = tape.constant(features[static_cast<std::size_t>(s)].reshaped({1, 3}));
      auto l = ce_graph(tape, tape.matmul(fn, wn), {labels[static_cast<std::size_t>(s)]}, 10.0, false);
      total = s == 0 ? l : tape.add(total, l);
    }
    tape.backward(total);
    CHECK(max_rel_err(bg.prototype_grads, tape.grad(wn)) <= 1e-10);
  }

  SUBCASE("empty batch is a usage error") {
    CHECK_THROWS_AS(batch_grads({}, {}, w, 1.0), UsageError);
  }
}

TEST_CASE("normalization invariant across the temperature range") {
  Rng rng(101);
  for (int rep = 0; rep < 200; ++rep) {
    const int m = 2 + static_cast<int>(rng.below(9));
    const Tensor x = random_logits(rng, m, 100.0);
    for (double tau : {0.05, 0.1, 1.0, 100.0, 1e9}) {
      const Tensor p = softmax_tau(x, tau);
      double sum = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("argmax is invariant under temperature") {
  Rng rng(103);
  for (int rep = 0; rep < 200; ++rep) {
    const Tensor x = random_logits(rng, 2 + static_cast<int>(rng.below(9)), 10.0);
    const int ref = argmax_lowest(x);
    for (double tau : {0.1, 0.5, 1.0, 10.0, 100.0}) {
      CHECK(argmax_lowest(softmax_tau(x, tau)) == ref);
    }
  }
}

TEST_CASE("argmax tie-break picks the lowest index") {
  CHECK(argmax_lowest(Tensor::vec({1.0, 3.0, 3.0, 2.0})) == 1);
  CHECK(argmax_lowest(softmax_tau(Tensor::vec({3.0, 3.0}), 2.0)) == 0);
}

TEST_CASE("higher temperature flattens the distribution") {
  Rng rng(107);
  const std::vector<double> taus{0.1, 0.5, 1.0, 10.0, 100.0};
  for (int rep = 0; rep < 200; ++rep) {
    const Tensor x = random_logits(rng, 2 + static_cast<int>(rng.below(9)), 10.0);
    for (std::size_t a = 0; a + 1 < taus.size(); ++a) {
      const Tensor lo = softmax_tau(x, taus[a]);
      const Tensor hi = softmax_tau(x, taus[a + 1]);
      CHECK(lo[static_cast<std::size_t>(argmax_lowest(lo))] >=
            hi[static_cast<std::size_t>(argmax_lowest(hi))]);
    }
  }
}

TEST_CASE("closed-form gradients scale as 1/tau with probabilities held fixed") {
  Rng rng(109);
  Tensor f({4}), w({4, 5});
  for (double& v : f.vals()) v = rng.uniform(-1, 1);
  for (double& v : w.vals()) v = rng.uniform(-1, 1);
  const Tensor p = softmax_tau(random_logits(rng, 5, 2.0), 1.0);
  for (double tau : {0.1, 2.0, 30.0, 100.0}) {
    CHECK(max_rel_err(scale(grad_positive_prototype(f, p, 1, tau), tau), grad_positive_prototype(f, p, 1, 1.0)) <=
          1e-15);
    CHECK(max_rel_err(scale(grad_negative_prototype(f, p, 3, 1, tau), tau),
                      grad_negative_prototype(f, p, 3, 1, 1.0)) <= 1e-15);
    CHECK(max_rel_err(scale(grad_feature(w, p, 1, tau), tau), grad_feature(w, p, 1, 1.0)) <= 1e-15);
  }
}

TEST_CASE("probabilities strictly positive within the exponent range") {
  Rng rng(113);
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor p = softmax_tau(random_logits(rng, 5, 30.0), 0.1);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] > 0.0);
  }
}
