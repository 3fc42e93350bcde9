#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "core/geometry.hpp"
#include "core/model.hpp"

using namespace tempscale;

namespace {

// Identity encoder: features(x) == x for x in [0, 1], so geometry can be
// arranged exactly through the head columns.
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

void set_prototype(Model& m, int j, const std::vector<double>& w) {
  Parameter& head = m.params.at("head.W");
  for (int i = 0; i < static_cast<int>(w.size()); ++i) head.value.at(i, j) = w[static_cast<std::size_t>(i)];
}

}  // namespace

TEST_CASE("prototype geometry exact cases") {
  Model m = identity_model(2, 3);
  set_prototype(m, 0, {0.3, 0.7});
  set_prototype(m, 1, {0.0, 0.5});
  set_prototype(m, 2, {0.5, 0.0});

  SUBCASE("feature equal to a prototype: distance 0, cosine 1") {
    const PrototypeGeometry g = prototype_geometry(m, Tensor::vec({0.3, 0.7}), 0);
    CHECK(g.euclidean[0] == 0.0);
    CHECK(g.cosine[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal feature and prototype: cosine 0") {
    const PrototypeGeometry g = prototype_geometry(m, Tensor::vec({0.5, 0.0}), 0);
    CHECK(g.cosine[1] == 0.0);
  }
  SUBCASE("hand-computed 2-d case") {
    Model h = identity_model(2, 2);
    set_prototype(h, 0, {1.0, 0.0});
    set_prototype(h, 1, {0.0, 1.0});
    const PrototypeGeometry g = prototype_geometry(h, Tensor::vec({1.0, 0.0}), 0);
    CHECK(g.euclidean[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(g.cosine[1] == 0.0);
  }
  SUBCASE("cosine bounds and distance non-negativity") {
    const PrototypeGeometry g = prototype_geometry(m, Tensor::vec({0.9, 0.1}), 2);
    for (double c : g.cosine) {
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
    }
    for (double d : g.euclidean) CHECK(d >= 0.0);
  }
  SUBCASE("zero-norm feature is a degeneracy error") {
    CHECK_THROWS_AS(prototype_geometry(m, Tensor::vec({0.0, 0.0}), 0), DomainError);
  }
  SUBCASE("zero-norm prototype is a degeneracy error") {
    Model z = identity_model(2, 2);
    set_prototype(z, 0, {0.4, 0.4});
    set_prototype(z, 1, {0.0, 0.0});
    CHECK_THROWS_AS(prototype_geometry(z, Tensor::vec({0.5, 0.5}), 0), DomainError);
  }
}

TEST_CASE("error-prone class selection") {
  CHECK(error_prone_class(Tensor::vec({0.7, 0.2, 0.1}), 0) == 1);
  CHECK(error_prone_class(Tensor::vec({0.1, 0.6, 0.3}), 1) == 2);
  // Uniform negatives: lowest index among them.
  CHECK(error_prone_class(Tensor::vec({0.25, 0.25, 0.25, 0.25}), 2) == 0);
  CHECK(error_prone_class(Tensor::vec({0.5, 0.25, 0.25}), 0) == 1);
  CHECK_THROWS_AS(error_prone_class(Tensor::vec({0.5, 0.5}), 2), IndexError);
}

TEST_CASE("range normalization") {
  CHECK(normalize_range({2, 4, 6}) == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(normalize_range({0.0, 0.25, 1.0}) == std::vector<double>{0.0, 0.25, 1.0});
  SUBCASE("affine invariance") {
    const std::vector<double> v{0.3, -1.0, 2.5, 0.9};
    const std::vector<double> base = normalize_range(v);
    std::vector<double> scaled;
    for (double x : v) scaled.push_back(3.7 * x + 11.0);
    const std::vector<double> got = normalize_range(scaled);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(got[i] == doctest::Approx(base[i]).epsilon(1e-13));
  }
  CHECK_THROWS_AS(normalize_range({1.0, 1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(normalize_range({}), UsageError);
}

TEST_CASE("distribution stats with linear-interpolation quantiles") {
  const DistStats s = dist_stats({4, 1, 3, 2});
  CHECK(s.min == 1.0);
  CHECK(s.q1 == 1.75);
  CHECK(s.median == 2.5);
  CHECK(s.q3 == 3.25);
  CHECK(s.max == 4.0);
  CHECK(s.mean == 2.5);
}

TEST_CASE("variance summary") {
  SUBCASE("equal negative distances give zero variance") {
    // Mirror-symmetric prototypes with exactly representable coordinates:
    // both distances and both cosines agree bit for bit.
    Model m = identity_model(2, 3);
    set_prototype(m, 0, {0.5, 1.0});
    set_prototype(m, 1, {0.25, 0.75});
    set_prototype(m, 2, {0.75, 0.25});
    Dataset ds;
    ds.classes = 3;
    ds.sample_shape = {2};
    ds.samples = Tensor({1, 2}, {0.5, 0.5});
    ds.labels = {0};
    const VarianceSummary v = variance_summary(m, ds);
    CHECK(v.euclid_var[0] == 0.0);
    CHECK(v.cosine_var[0] == 0.0);
  }
  SUBCASE("negatives at the range endpoints give population variance 0.25") {
    Model m = identity_model(2, 3);
    set_prototype(m, 0, {0.5, 0.8});   // true class, intermediate distance
    set_prototype(m, 1, {0.5, 0.5});   // distance 0 -> normalized 0
    set_prototype(m, 2, {0.5, 0.05});  // farthest -> normalized 1
    Dataset ds;
    ds.classes = 3;
    ds.sample_shape = {2};
    ds.samples = Tensor({1, 2}, {0.5, 0.5});
    ds.labels = {0};
    const VarianceSummary v = variance_summary(m, ds);
    CHECK(v.euclid_var[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(v.euclid_stats.median == v.euclid_var[0]);
  }
  SUBCASE("stats ordering invariant") {
    Model m = identity_model(3, 4);
    set_prototype(m, 0, {0.5, 0.1, 0.3});
    set_prototype(m, 1, {0.1, 0.5, 0.2});
    set_prototype(m, 2, {0.3, 0.3, 0.9});
    set_prototype(m, 3, {0.8, 0.2, 0.4});
    Dataset ds;
    ds.classes = 4;
    ds.sample_shape = {3};
    ds.samples = Tensor({3, 3}, {0.2, 0.3, 0.4, 0.9, 0.1, 0.2, 0.5, 0.5, 0.5});
    ds.labels = {0, 1, 2};
    const VarianceSummary v = variance_summary(m, ds);
    CHECK(v.euclid_stats.q1 <= v.euclid_stats.median);
    CHECK(v.euclid_stats.median <= v.euclid_stats.q3);
    for (double var : v.euclid_var) CHECK(var >= 0.0);
  }
}

TEST_CASE("logit shift records and aggregation") {
  Model m = identity_model(2, 3);
  set_prototype(m, 0, {0.9, 0.1});
  set_prototype(m, 1, {0.1, 0.9});
  set_prototype(m, 2, {0.5, 0.5});
  const Tensor x = Tensor::vec({0.8, 0.2});

  SUBCASE("identical input gives all-zero deltas") {
    const LogitShiftRecord r = logit_shift(m, x, x, 0);
    for (double d : r.delta.vals()) CHECK(d == 0.0);
    CHECK(r.label_delta == 0.0);
    CHECK(r.error_prone_delta == 0.0);
  }
  SUBCASE("delta is adversarial minus clean exactly") {
    const Tensor xa = Tensor::vec({0.7, 0.35});
    const LogitShiftRecord r = logit_shift(m, x, xa, 0);
    const Tensor want = sub(m.forward_one(xa), m.forward_one(x));
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(r.delta[i] == want[i]);
    CHECK(r.label_delta == r.delta[0]);
    CHECK(r.error_prone == 2);  // prototype 2 is closer to x than prototype 1
    CHECK(r.error_prone_delta == r.delta[2]);
  }
  SUBCASE("aggregate means in index order") {
    std::vector<LogitShiftRecord> recs;
    recs.push_back(logit_shift(m, x, Tensor::vec({0.7, 0.3}), 0));
    recs.push_back(logit_shift(m, x, Tensor::vec({0.9, 0.1}), 0));
    const LogitShiftAggregate a = aggregate_logit_shift(recs);
    CHECK(a.mean_label_delta ==
          doctest::Approx((recs[0].label_delta + recs[1].label_delta) / 2).epsilon(1e-15));
    double abs_sum = 0.0;
    for (const auto& r : recs)
      for (double d : r.delta.vals()) abs_sum += std::fabs(d);
    CHECK(a.mean_abs_delta == doctest::Approx(abs_sum / 6.0).epsilon(1e-15));
  }
}

TEST_CASE("feature export format") {
  Model m = identity_model(2, 2);
  set_prototype(m, 0, {1.0, 0.0});
  set_prototype(m, 1, {0.0, 1.0});
  Dataset ds;
  ds.classes = 2;
  ds.sample_shape = {2};
  ds.samples = Tensor({2, 2}, {0.25, 0.5, 0.75, 0.1});
  ds.labels = {0, 1};
  export_features(m, ds, "features_test.csv");
  std::ifstream in("features_test.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "sample,label,f0,f1\n0,0,0.25,0.5\n1,1,0.75,0.1\n");
  in.close();
  std::remove("features_test.csv");
}

TEST_CASE("geometry csv is tidy per sample and class") {
  Model m = identity_model(2, 3);
  set_prototype(m, 0, {0.4, 0.3});
  set_prototype(m, 1, {0.1, 0.8});
  set_prototype(m, 2, {0.7, 0.6});
  Dataset ds;
  ds.classes = 3;
  ds.sample_shape = {2};
  ds.samples = Tensor({2, 2}, {0.3, 0.4, 0.6, 0.2});
  ds.labels = {0, 2};
  write_geometry_csv(m, ds, "geometry_test.csv");
  std::ifstream in("geometry_test.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "sample,label,class,euclidean,cosine");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6);  // 2 samples x 3 classes
  in.close();
  std::remove("geometry_test.csv");
}
