#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "core/autodiff.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

using namespace tempscale;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.vals()) v = rng.uniform(lo, hi);
  return t;
}

// Small random MLP forward pass built from tape primitives; `leaves` gets
// every differentiable leaf so callers can pick targets for checking.
struct MlpInstance {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor input;
  Tensor mix;  // random linear functional making the loss scalar

  double loss_at(const Tensor& replacement, int leaf_index) const {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    forward(tape, replacement, leaf_index, &ids);
    return tape.value(ids.back()).item();
  }

  // leaf_index: 0 = input, 1 + 2k = weight k, 2 + 2k = bias k.
  void forward(Tape& tape, const Tensor& replacement, int leaf_index, std::vector<Tape::NodeId>* ids) const {
    auto lift = [&](const Tensor& t, int idx) {
      return tape.input(idx == leaf_index ? replacement : t);
    };
    Tape::NodeId h = lift(input, 0);
    ids->push_back(h);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      auto w = lift(weights[l], 1 + 2 * static_cast<int>(l));
      auto b = lift(biases[l], 2 + 2 * static_cast<int>(l));
      ids->push_back(w);
      ids->push_back(b);
      h = tape.relu(tape.add_bias(tape.matmul(h, w), b));
    }
    auto out = tape.mean(tape.mul(h, tape.constant(mix)));
    ids->push_back(out);
  }

  // Reject instances with pre-activations near the relu kink, where central
  // differences at h=1e-5 are unreliable.
  bool away_from_kinks() const {
    Tensor h = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Tensor z = matmul(h, weights[l]);
      for (int c = 0; c < z.cols(); ++c)
        for (int r = 0; r < z.rows(); ++r) z.at(r, c) += biases[l][static_cast<std::size_t>(c)];
      for (double v : z.vals()) {
        if (std::fabs(v) < 1e-3) return false;
      }
      for (double& v : z.vals()) v = v > 0.0 ? v : 0.0;
      h = std::move(z);
    }
    return true;
  }
};

MlpInstance random_mlp(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, "mlp-instance", attempt));
    MlpInstance m;
    const int depth = 1 + static_cast<int>(rng.below(3));  // 1..3 layers
    int in = 2 + static_cast<int>(rng.below(6));
    m.input = random_tensor({1, in}, rng);
    for (int l = 0; l < depth; ++l) {
      const int out = 2 + static_cast<int>(rng.below(31));  // width <= 32
      m.weights.push_back(random_tensor({in, out}, rng));
      m.biases.push_back(random_tensor({out}, rng, -0.5, 0.5));
      in = out;
    }
    m.mix = random_tensor({1, in}, rng);
    if (m.away_from_kinks()) return m;
    REQUIRE(attempt < 50);
  }
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor c = matmul(eye, b);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(c[i] == b[i]);
}

TEST_CASE("matmul hand example") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3});
  Tensor b({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("forward primitives") {
  Tape tape;
  auto r = tape.relu(tape.constant(Tensor::vec({-1, 0, 2})));
  CHECK(tape.value(r)[0] == 0.0);
  CHECK(tape.value(r)[1] == 0.0);
  CHECK(tape.value(r)[2] == 2.0);

  // 1x1 convolution degenerates to a product.
  auto c = tape.conv2d(tape.constant(Tensor({1, 1, 1, 1}, {3.0})), tape.constant(Tensor({1, 1, 1, 1}, {-2.5})),
                       false);
  CHECK(tape.value(c)[0] == doctest::Approx(-7.5));

  auto m = tape.mean(tape.constant(Tensor::vec({2, 4, 6})));
  CHECK(tape.value(m).item() == 4.0);

  auto f = tape.flatten(tape.constant(Tensor({2, 2, 3})));
  CHECK(tape.value(f).shape() == Shape{2, 6});
}

TEST_CASE("backward of linear map returns the constant") {
  Tape tape;
  Tensor c = Tensor::vec({2.0, -3.0, 0.5});
  auto w = tape.input(Tensor::vec({1.0, 1.0, 1.0}));
  tape.backward(tape.sum(tape.mul(w, tape.constant(c))));
  const Tensor& g = tape.grad(w);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(g[i] == c[i]);
}

TEST_CASE("relu gradient is zero at negative input and at exactly zero") {
  for (double x : {-2.0, 0.0}) {
    Tape tape;
    auto in = tape.input(Tensor::vec({x}));
    tape.backward(tape.sum(tape.relu(in)));
    CHECK(tape.grad(in)[0] == 0.0);
  }
  Tape tape;
  auto in = tape.input(Tensor::vec({3.0}));
  tape.backward(tape.sum(tape.relu(in)));
  CHECK(tape.grad(in)[0] == 1.0);
}

TEST_CASE("backward requires scalar output") {
  Tape tape;
  auto in = tape.input(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(tape.relu(in)), UsageError);
}

TEST_CASE("random MLPs: autodiff matches central finite differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const MlpInstance m = random_mlp(seed);
    const int leaf_count = 1 + 2 * static_cast<int>(m.weights.size());
    Rng pick(derive_seed(seed, "leaf-pick"));
    const int leaf = static_cast<int>(pick.below(static_cast<std::uint64_t>(leaf_count)));

    Tape tape;
    std::vector<Tape::NodeId> ids;
    const Tensor at = leaf == 0 ? m.input : (leaf % 2 == 1 ? m.weights[(leaf - 1) / 2] : m.biases[(leaf - 2) / 2]);
    m.forward(tape, at, leaf, &ids);
    tape.backward(ids.back());
    const Tensor& auto_grad = tape.grad(ids[static_cast<std::size_t>(leaf)]);

    const Tensor fd = finite_diff_grad([&](const Tensor& p) { return m.loss_at(p, leaf); }, at, 1e-5);
    worst = std::max(worst, max_rel_err(auto_grad, fd));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("conv and pooling gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(seed, "conv-check"));
    const Tensor x = random_tensor({1, 2, 4, 4}, rng, 0.0, 1.0);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    const Tensor mix = random_tensor({1, 3, 2, 2}, rng);

    auto loss_with = [&](const Tensor& kk) {
      Tape t;
      auto xc = t.constant(x);
      auto kn = t.input(kk);
      auto out = t.avg_pool2(t.conv2d(xc, kn, true));
      return std::pair{&t, t.sum(t.mul(out, t.constant(mix)))};
    };

    Tape t;
    auto xn = t.input(x);
    auto kn = t.input(k);
    auto out = t.avg_pool2(t.conv2d(xn, kn, true));
    t.backward(t.sum(t.mul(out, t.constant(mix))));

    const Tensor fd_k = finite_diff_grad(
        [&](const Tensor& kk) {
          Tape tt;
          auto o = tt.avg_pool2(tt.conv2d(tt.constant(x), tt.constant(kk), true));
          return tt.value(tt.sum(tt.mul(o, tt.constant(mix)))).item();
        },
        k, 1e-5);
    const Tensor fd_x = finite_diff_grad(
        [&](const Tensor& xx) {
          Tape tt;
          auto o = tt.avg_pool2(tt.conv2d(tt.constant(xx), tt.constant(k), true));
          return tt.value(tt.sum(tt.mul(o, tt.constant(mix)))).item();
        },
        x, 1e-5);
    CHECK(max_rel_err(t.grad(kn), fd_k) <= 1e-6);
    CHECK(max_rel_err(t.grad(xn), fd_x) <= 1e-6);
    (void)loss_with;
  }
}

TEST_CASE("finite differences: analytic cases") {
  const Tensor fd = finite_diff_grad(
      [](const Tensor& t) { return t[0] * t[0] + t[1] * t[1]; }, Tensor::vec({1.0, 2.0}), 1e-5);
  CHECK(fd[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(fd[1] == doctest::Approx(4.0).epsilon(1e-8));

  const Tensor zero = finite_diff_grad([](const Tensor&) { return 7.0; }, Tensor::vec({1.0, -2.0, 3.0}), 1e-4);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

  // Central differences are exact on affine functions up to rounding.
  const Tensor lin = finite_diff_grad(
      [](const Tensor& t) { return 3.0 * t[0] - 0.25 * t[1]; }, Tensor::vec({0.4, 0.8}), 1e-5);
  CHECK(lin[0] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(lin[1] == doctest::Approx(-0.25).epsilon(1e-10));
}

TEST_CASE("gradient accumulation doubles on repeated backward") {
  ParameterStore store;
  store.create("w", Tensor::vec({1.0, 2.0}));
  Tape tape;
  auto w = tape.param(store, "w");
  auto in = tape.input(Tensor::vec({3.0, 4.0}));
  auto loss = tape.sum(tape.mul(w, in));
  tape.backward(loss);
  const Tensor once_w = store.at("w").grad;
  const Tensor once_in = tape.grad(in);
  tape.backward(loss);
  for (std::size_t i = 0; i < once_w.size(); ++i) {
    CHECK(store.at("w").grad[i] == 2.0 * once_w[i]);
    CHECK(tape.grad(in)[i] == 2.0 * once_in[i]);
  }
  store.zero_grad();
  for (std::size_t i = 0; i < once_w.size(); ++i) CHECK(store.at("w").grad[i] == 0.0);
}

TEST_CASE("replay determinism: identical seeds give bit-identical gradients") {
  auto run = [](std::uint64_t seed) {
    const MlpInstance m = random_mlp(seed);
    Tape tape;
    std::vector<Tape::NodeId> ids;
    m.forward(tape, m.input, 0, &ids);
    tape.backward(ids.back());
    return std::pair{tape.value(ids.back()).item(), tape.grad(ids[0])};
  };
  auto [l1, g1] = run(42);
  auto [l2, g2] = run(42);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("parameter store invariants") {
  ParameterStore store;
  store.create("a", Tensor({2, 2}));
  CHECK(store.at("a").grad.same_shape(store.at("a").value));
  CHECK_THROWS_AS(store.create("a", Tensor({1})), UsageError);
  CHECK_THROWS_AS(store.at("missing"), UsageError);
}
