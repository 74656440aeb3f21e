#include <cmath>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/knn_selector.hpp"
#include "metahpo/optimizer_suite.hpp"

using namespace metahpo;

namespace {

FitnessTable toy_table(int id, const HyperParamSchema& schema, std::vector<double> mse) {
  FitnessTable t(id, schema);
  for (std::size_t i = 0; i < mse.size(); ++i) {
    t.set(i, {mse[i], std::isfinite(mse[i]) ? fitness_from_mse(mse[i]) : 0.0});
  }
  return t;
}

MetaSample sample(int id, std::vector<double> f, const Strategy& label) {
  return {id, std::move(f), label, 0.0};
}

}  // namespace

TEST_CASE("pair corpus: every ordered pair read from the query table") {
  const auto schema = MatchCountLandscape::make_schema(2, 2);
  const auto& g = schema.grid();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<FitnessTable> tables{toy_table(1, schema, {0.1, 0.2, 0.3, 0.4}),
                                   toy_table(2, schema, {0.5, inf, 0.7, 0.05}),
                                   toy_table(3, schema, {0.9, 1.0, 1.1, 0.2})};
  const std::vector<MetaSample> samples{sample(1, {0.0, 1.0}, g[0]), sample(2, {1.0, 0.0}, g[3]),
                                        sample(3, {0.5, 0.5}, g[1])};
  const auto corpus = build_pair_corpus(tables, samples, schema);
  REQUIRE(corpus.size() == 9);
  // row = p * 3 + r
  CHECK(corpus.pairs[0].rd == 0.1);                 // p=1 label g0 on task 1
  CHECK(corpus.pairs[1].rd == 0.5);                 // p=1 label g0 on task 2
  CHECK(corpus.pairs[5].rd == 0.2);                 // p=2 label g3 on task 3
  CHECK(corpus.pairs[7].rd == 1.0);                 // p=3 label g1 on task 2: inf capped at the finite max
  CHECK(corpus.pairs[7].source == 3);
  CHECK(corpus.pairs[7].query == 2);
  CHECK(corpus.rd_min == 0.05);
  CHECK(corpus.rd_max == 1.0);
  CHECK(corpus.targets[7] == doctest::Approx(1.0));
  CHECK(corpus.targets[4] == doctest::Approx(0.0));
  CHECK(corpus.inputs(5, 0) == 1.0);
  CHECK(corpus.inputs(5, 2) == 0.5);
}

TEST_CASE("distance net fits a constant target") {
  PairCorpus c;
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  c.inputs = Matrix(12, 4);
  for (double& v : c.inputs.values()) v = u(rng);
  c.targets.assign(12, 0.3);
  c.pairs.resize(12);
  DistanceNet net(2, 16, 2);
  DistanceConfig cfg;
  cfg.epochs = 800;
  cfg.learning_rate = 3e-3;
  const auto curve = train_distance_net(net, c, cfg);
  REQUIRE(curve.size() == 800);
  CHECK(curve.back() < 1e-4);
  CHECK(curve.back() < curve.front());
}

TEST_CASE("nearest: exact k, ascending order, errors") {
  DistanceNet net(2, 8, 3);
  std::vector<MetaSample> store;
  for (int i = 0; i < 6; ++i) store.push_back(sample(10 + i, {0.1 * i, 1.0 - 0.1 * i}, Strategy{{0}}));
  const std::vector<double> q{0.25, 0.75};
  const auto nn = nearest(net, store, q, 4);
  REQUIRE(nn.size() == 4);
  for (std::size_t i = 1; i < nn.size(); ++i) CHECK(nn[i - 1].distance <= nn[i].distance);
  CHECK(nn[0].distance == doctest::Approx(net.distance(nn[0].sample.features, q)));
  CHECK_THROWS_AS(nearest(net, store, q, 0), ConfigError);
  CHECK_THROWS_AS(nearest(net, store, q, 7), ConfigError);
  CHECK_THROWS_AS(nearest(net, std::span<const MetaSample>{}, q, 1), RetrievalError);
}

TEST_CASE("nearest: equal distances order by task id") {
  DistanceNet net(1, 4, 4);
  for (Param* p : net.params()) p->value.fill(0.0);
  std::vector<MetaSample> store{sample(5, {0.2}, Strategy{{0}}), sample(2, {0.9}, Strategy{{0}}),
                                sample(8, {0.4}, Strategy{{0}})};
  const std::vector<double> q{0.5};
  const auto nn = nearest(net, store, q, 3);
  CHECK(nn[0].sample.task_id == 2);
  CHECK(nn[1].sample.task_id == 5);
  CHECK(nn[2].sample.task_id == 8);
  CHECK(nn[0].distance == doctest::Approx(std::log(2.0)));
}

TEST_CASE("trained distance puts the task itself first") {
  // RD grows with feature distance, zero on the diagonal.
  std::vector<MetaSample> store;
  for (int i = 0; i < 5; ++i) store.push_back(sample(i, {0.2 * i, std::fmod(0.37 * i, 1.0)}, Strategy{{0}}));
  PairCorpus c;
  c.inputs = Matrix(25, 4);
  std::size_t row = 0;
  for (const auto& p : store) {
    for (const auto& r : store) {
      const double d = std::hypot(p.features[0] - r.features[0], p.features[1] - r.features[1]);
      c.pairs.push_back({p.task_id, r.task_id, d});
      c.targets.push_back(d);
      c.inputs(row, 0) = p.features[0];
      c.inputs(row, 1) = p.features[1];
      c.inputs(row, 2) = r.features[0];
      c.inputs(row, 3) = r.features[1];
      ++row;
    }
  }
  DistanceNet net(2, 64, 7);
  DistanceConfig cfg;
  cfg.epochs = 3000;
  cfg.learning_rate = 3e-3;
  train_distance_net(net, c, cfg);
  for (const auto& q : store) {
    const auto nn = nearest(net, store, q.features, 1);
    CHECK(nn[0].sample.task_id == q.task_id);
  }
}
