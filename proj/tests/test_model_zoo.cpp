#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>

#include "core/errors.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

using namespace tempscale;

namespace {

// Encoder whose layers are identity matrices with zero bias: features equal
// the input exactly for inputs in [0, 1] (relu is a no-op there).
Model identity_model(int d, int classes) {
  Model m = init_model(EncoderSpec::mlp(d, {d}, d), classes, 0);
  for (const std::string& name : m.params.names()) {
    Parameter& p = m.params.at(name);
    std::fill(p.value.vals().begin(), p.value.vals().end(), 0.0);
    if (name == "enc.0.W" || name == "enc.1.W") {
      for (int i = 0; i < d; ++i) p.value.at(i, i) = 1.0;
    }
  }
  return m;
}

Tensor random_batch(const EncoderSpec& spec, int n, std::uint64_t seed) {
  Shape s{n};
  for (int d : spec.input_shape) s.push_back(d);
  Tensor t(s);
  Rng rng(seed);
  for (double& v : t.vals()) v = rng.uniform01();
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
  const EncoderSpec spec = EncoderSpec::mlp(12, {16, 8}, 4);
  const Model a = init_model(spec, 3, 99);
  const Model b = init_model(spec, 3, 99);
  const Model c = init_model(spec, 3, 100);
  bool all_equal = true, any_diff_c = false;
  for (const std::string& name : a.params.names()) {
    all_equal = all_equal && bit_equal(a.params.at(name).value, b.params.at(name).value);
    any_diff_c = any_diff_c || !bit_equal(a.params.at(name).value, c.params.at(name).value);
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("biases are zero at init") {
  const Model m = init_model(EncoderSpec::mlp(10, {8}, 4), 3, 5);
  for (const std::string& name : m.params.names()) {
    if (name.size() > 2 && name.substr(name.size() - 2) == ".b") {
      for (double v : m.params.at(name).value.vals()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("weight variance tracks 2/fan_in") {
  const Model m = init_model(EncoderSpec::mlp(128, {256}, 64), 10, 7);
  const Tensor& w = m.params.at("enc.0.W").value;  // fan_in 128
  double sumsq = 0.0;
  for (double v : w.vals()) sumsq += v * v;
  const double var = sumsq / static_cast<double>(w.size());
  const double expect = 2.0 / 128.0;
  CHECK(var >= 0.8 * expect);
  CHECK(var <= 1.2 * expect);
}

TEST_CASE("init rejects fewer than 2 classes") {
  CHECK_THROWS_AS(init_model(EncoderSpec::mlp(4, {4}, 2), 1, 0), UsageError);
}

TEST_CASE("identity encoder with identity head reproduces the input") {
  Model m = identity_model(3, 3);
  Parameter& head = m.params.at("head.W");
  for (int i = 0; i < 3; ++i) head.value.at(i, i) = 1.0;
  const Tensor x = Tensor::vec({0.2, 0.9, 0.4});
  const Tensor logits = m.forward_one(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(logits[i] == x[i]);
}

TEST_CASE("forward is deterministic and factorizes through the prototype head") {
  for (const EncoderSpec& spec :
       {EncoderSpec::mlp(12, {16, 8}, 6), EncoderSpec::small_cnn({1, 8, 8}, {4, 6}, 5)}) {
    const Model m = init_model(spec, 4, 21);
    const Tensor x = random_batch(spec, 3, 77);
    const Tensor l1 = m.forward(x);
    const Tensor l2 = m.forward(x);
    CHECK(bit_equal(l1, l2));
    const Tensor f = m.features(x);
    CHECK(f.cols() == spec.feature_dim);
    for (double v : f.vals()) CHECK(v >= 0.0);  // relu encoder
    CHECK(bit_equal(l1, matmul(f, m.prototype_matrix())));
  }
}

TEST_CASE("forward rejects mismatched input shapes") {
  const Model m = init_model(EncoderSpec::mlp(6, {4}, 3), 2, 0);
  CHECK_THROWS_AS(m.forward(Tensor({2, 5})), ShapeError);
  CHECK_THROWS_AS(m.forward_one(Tensor({7})), ShapeError);
}

TEST_CASE("prototypes are stable copies in class order") {
  const Model m = init_model(EncoderSpec::mlp(6, {4}, 3), 4, 3);
  const auto p1 = m.prototypes();
  const auto p2 = m.prototypes();
  REQUIRE(p1.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(bit_equal(p1[j], p2[j]));
    for (int i = 0; i < 3; ++i) {
      CHECK(p1[j][static_cast<std::size_t>(i)] == m.prototype_matrix().at(i, static_cast<int>(j)));
    }
  }
}

TEST_CASE("save/load round trip is bit exact") {
  for (const EncoderSpec& spec :
       {EncoderSpec::mlp(9, {12}, 5), EncoderSpec::small_cnn({1, 8, 8}, {3}, 4)}) {
    Model m = init_model(spec, 3, 13);
    m.train_tau = 30.0;
    m.train_epochs = 7;
    m.train_config_json = "{\"tau\":30.0}";
    m.dataset_id = "unit-test";
    const std::string path = "model_roundtrip_test.json";
    save_model(m, path);
    const Model r = load_model(path);
    CHECK(r.classes == m.classes);
    CHECK(r.train_tau == 30.0);
    CHECK(r.train_epochs == 7);
    CHECK(r.dataset_id == "unit-test");
    for (const std::string& name : m.params.names()) {
      CHECK(bit_equal(r.params.at(name).value, m.params.at(name).value));
    }
    for (int i = 0; i < 10; ++i) {
      const Tensor x = random_batch(spec, 2, 1000 + static_cast<std::uint64_t>(i));
      CHECK(bit_equal(m.forward(x), r.forward(x)));
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("model file errors") {
  CHECK_THROWS_AS(load_model("does_not_exist.json"), IoError);
  const std::string path = "model_bad_test.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("{\"format\":\"something-else\",\"version\":1,\"classes\":2,"
               "\"encoder\":{},\"metadata\":{},\"params\":{}}",
               f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_model(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("encoder spec validation") {
  CHECK_THROWS_AS(EncoderSpec::mlp(8, {}, 4), ConfigError);        // no hidden layer
  CHECK_THROWS_AS(EncoderSpec::mlp(8, {16}, 1), ConfigError);      // feature dim < 2
  CHECK_THROWS_AS(EncoderSpec::small_cnn({1, 6, 6}, {4, 4}, 4), ConfigError);  // 6 not divisible twice
}
