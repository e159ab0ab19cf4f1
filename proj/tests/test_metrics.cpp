#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "corefed/error.hpp"
#include "corefed/metrics.hpp"
#include "oracles.hpp"

using namespace corefed;

namespace {

ParameterVector P(std::vector<double> v) { return ParameterVector(std::move(v)); }

ModelSpec small_spec() { return ModelSpec{4, {3}, 10, Activation::relu}; }

// All weights zero; the output bias alone decides the prediction.
ParameterVector constant_predictor(const ModelSpec& spec, int cls) {
  ParameterVector p(spec.parameter_count());
  const auto shapes = layer_shapes(spec);
  if (cls >= 0) p[shapes.back().bias_offset + static_cast<std::size_t>(cls)] = 1.0;
  return p;
}

Dataset labelled(std::vector<int> labels, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Dataset d;
  d.inputs = Matrix(labels.size(), dim);
  for (double& v : d.inputs.data()) v = n(rng);
  d.labels = std::move(labels);
  d.num_classes = 10;
  return d;
}

}  // namespace

TEST_CASE("d_cosine") {
  CHECK(*d_cosine(P({1, 2, 3}), P({2, 4, 6})) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(*d_cosine(P({1, 0}), P({-1, 0})) == doctest::Approx(std::numbers::pi));
  CHECK(*d_cosine(P({1, 0}), P({1, 1})) == doctest::Approx(0.7853981633974483).epsilon(1e-14));
  CHECK(*d_cosine(P({1, 0}), P({0, 3})) == doctest::Approx(std::numbers::pi / 2));
  CHECK_FALSE(d_cosine(P({0, 0}), P({1, 1})).has_value());
  CHECK_FALSE(d_cosine(P({1, 1}), P({0, 0})).has_value());

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = oracle::random_params(8, rng);
    const auto b = oracle::random_params(8, rng);
    const double d = *d_cosine(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= std::numbers::pi);
    CHECK(d == doctest::Approx(*d_cosine(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("d_manhattan") {
  CHECK(d_manhattan(P({1, 2}), P({1, 2})) == 0.0);
  CHECK(d_manhattan(P({1, -2, 0.5}), P({0, 1, 0})) == doctest::Approx(4.5));
  CHECK_THROWS_AS(d_manhattan(P({1}), P({1, 2})), MeasurementError);
}

TEST_CASE("fairness summary") {
  SUBCASE("hand values") {
    const ParameterVector g = P({1, 0});
    const auto s = fairness_summary({{0, P({1, 0})}, {1, P({0, 2})}}, g);
    REQUIRE(s.d_cosine_mean.has_value());
    CHECK(*s.d_cosine_mean == doctest::Approx(std::numbers::pi / 4));
    CHECK(s.d_manhattan_mean == doctest::Approx(1.5));
  }
  SUBCASE("mirrored clients") {
    std::mt19937_64 rng(9);
    const auto g = oracle::random_params(6, rng);
    const auto v = oracle::random_params(6, rng);
    ParameterVector plus(6), minus(6);
    for (std::size_t i = 0; i < 6; ++i) {
      plus[i] = g[i] + v[i];
      minus[i] = g[i] - v[i];
    }
    const auto s = fairness_summary({{0, plus}, {1, minus}}, g);
    const auto one = fairness_summary({{0, plus}}, g);
    CHECK(s.d_manhattan_mean == doctest::Approx(one.d_manhattan_mean).epsilon(1e-13));
  }
  SUBCASE("zero-norm local leaves the angle out") {
    const auto s = fairness_summary({{0, P({0, 0})}, {1, P({1, 0})}}, P({1, 0}));
    REQUIRE(s.d_cosine_mean.has_value());
    CHECK(*s.d_cosine_mean == doctest::Approx(0.0));
    const auto none = fairness_summary({{0, P({0, 0})}}, P({1, 0}));
    CHECK_FALSE(none.d_cosine_mean.has_value());
  }
}

TEST_CASE("accuracy of a constant predictor") {
  std::mt19937_64 rng(1);
  const auto spec = small_spec();
  std::vector<Shard> shards;
  for (ClientId c = 0; c < 5; ++c) {
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) labels.push_back(i % 10);
    Shard s;
    s.client_id = c;
    s.test = labelled(labels, spec.input_dim, rng);
    shards.push_back(std::move(s));
  }
  for (int cls = 0; cls < 10; ++cls) {
    const auto r = evaluate_accuracy(constant_predictor(spec, cls), spec, shards);
    CHECK(r.mean == doctest::Approx(0.1));
    CHECK(r.per_client.size() == 5);
    CHECK(pooled_accuracy(constant_predictor(spec, cls), spec, shards) == doctest::Approx(0.1));
  }
}

TEST_CASE("accuracy tie-break and per-client mean") {
  std::mt19937_64 rng(2);
  const auto spec = small_spec();
  const auto zero = constant_predictor(spec, -1);  // every logit ties -> class 0
  std::vector<Shard> shards(2);
  shards[0].client_id = 0;
  shards[0].test = labelled({0, 0, 0, 1}, spec.input_dim, rng);
  shards[1].client_id = 1;
  shards[1].test = labelled({0, 2, 3, 4, 5, 6, 7, 8}, spec.input_dim, rng);
  shards.push_back(Shard{2, {}, {}, true});  // no test data, left out

  const auto r = evaluate_accuracy(zero, spec, shards);
  CHECK(r.per_client.size() == 2);
  CHECK(r.per_client.at(0) == doctest::Approx(0.75));
  CHECK(r.per_client.at(1) == doctest::Approx(0.125));
  CHECK(r.mean == doctest::Approx(0.4375));
  CHECK(pooled_accuracy(zero, spec, shards) == doctest::Approx(4.0 / 12.0));

  // Reordering test rows changes nothing.
  auto shuffled = shards;
  std::vector<std::size_t> order{3, 1, 0, 2};
  shuffled[0].test = shards[0].test.subset(order);
  CHECK(evaluate_accuracy(zero, spec, shuffled).mean == r.mean);

  CHECK_THROWS_AS(evaluate_accuracy(zero, spec, {Shard{0, {}, {}, true}}), MeasurementError);
}

TEST_CASE("round report contrastive mean") {
  RoundReport r;
  CHECK_FALSE(r.mean_contrastive_loss().has_value());
  r.contrastive_losses = {{0, 1.0}, {1, std::nullopt}, {2, 3.0}};
  CHECK(*r.mean_contrastive_loss() == doctest::Approx(2.0));
}
