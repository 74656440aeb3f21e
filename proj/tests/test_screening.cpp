#include <cmath>
#include <numeric>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/optimizer_suite.hpp"
#include "metahpo/screening_grn.hpp"
#include "support.hpp"

using namespace metahpo;
using namespace metahpo::testing;

TEST_CASE("gene encoding: linear and log axes") {
  const auto schema = HyperParamSchema::full(ModelKind::mlp);
  const GeneEncoder enc(schema);
  CHECK(enc.width() == 4);
  const Strategy s = schema.from_values(std::vector<double>{12, 0.001, 4, 128});
  const auto e = enc.encode(s);
  CHECK(e[0] == doctest::Approx(0.5));
  CHECK(e[1] == doctest::Approx(0.5));  // log10 midpoint of 1e-4 .. 1e-2
  CHECK(e[2] == doctest::Approx(1.0));
  CHECK(e[3] == doctest::Approx(0.0));
  const auto hi = enc.encode(schema.from_values(std::vector<double>{18, 0.01, 2, 512}));
  CHECK(hi[0] == 1.0);
  CHECK(hi[1] == doctest::Approx(1.0));
  CHECK(hi[3] == 1.0);
}

TEST_CASE("gene encoding: nearest inverts encode on every grid point") {
  const auto schema = HyperParamSchema::full(ModelKind::adnn);
  const GeneEncoder enc(schema);
  for (const Strategy& s : schema.grid()) CHECK(enc.nearest(enc.encode(s)) == s);
}

TEST_CASE("screener gradient check at width 8") {
  ScreenerNet net(3, 4, 8, 21);
  Rng rng(22);
  Matrix f = random_matrix(5, 3, rng);
  Matrix g = random_matrix(5, 4, rng);
  const Matrix w = random_matrix(5, 1, rng);
  const ParamList params = net.params();
  zero_grads(params);
  net.forward(f, g);
  net.backward(w);
  std::vector<Probe> probes = param_probes(params);
  const auto r = check_gradients(probes, [&] { return projected_loss(net.forward(f, g), w); });
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("screener importance weights are a distribution per row") {
  ScreenerNet net(6, 5, 16, 3);
  Rng rng(4);
  net.forward(random_matrix(7, 6, rng), random_matrix(7, 5, rng));
  const Matrix& w = net.importance();
  REQUIRE(w.rows() == 7);
  REQUIRE(w.cols() == 6);
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(w(i, j) > 0.0);
      s += w(i, j);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("screener memorizes a small corpus") {
  Rng rng(5);
  ScreenerData data;
  data.features = random_matrix(16, 3, rng);
  data.genes = random_matrix(16, 4, rng);
  for (std::size_t i = 0; i < 16; ++i) data.targets.push_back(std::sin(3.0 * data.genes(i, 0)) + data.features(i, 1));
  ScreenerConfig cfg = ScreenerConfig::desk();
  cfg.hidden = 32;
  cfg.epochs = 1500;
  cfg.batch_size = 16;
  cfg.weight_decay = 0.0;
  ScreenerNet net(3, 4, cfg.hidden, 6);
  const auto curve = train_screener(net, data, cfg);
  REQUIRE(curve.size() == 1500);
  CHECK(curve.back() < 1e-3);
  CHECK(curve.back() < curve.front());
}

TEST_CASE("screener training rejects bad input") {
  ScreenerNet net(2, 2, 8, 1);
  ScreenerData empty;
  CHECK_THROWS_AS(train_screener(net, empty, ScreenerConfig::desk()), UsageError);
  ScreenerData ragged{Matrix(3, 2), Matrix(2, 2), {1, 2, 3}};
  CHECK_THROWS_AS(train_screener(net, ragged, ScreenerConfig::desk()), ShapeError);
  CHECK_THROWS_AS(ScreenerConfig::preset("huge"), ConfigError);
  CHECK(ScreenerConfig::preset("paper").hidden == 512);
  CHECK(ScreenerConfig::preset("paper").batch_size == 252);
}

TEST_CASE("target transform is monotone and standardized") {
  const std::vector<double> fit{0.0, 2.0, 4.0, 8.0, 16.0};
  const auto t = TargetTransform::fit(fit);
  CHECK(t.floor == 2.0);
  CHECK(t.apply(0.0) == t.apply(2.0));
  double sum = 0.0, sq = 0.0;
  for (double f : fit) {
    sum += t.apply(f);
    sq += t.apply(f) * t.apply(f);
  }
  CHECK(sum / 5 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sq / 5 == doctest::Approx(1.0));
  for (std::size_t i = 2; i < fit.size(); ++i) CHECK(t.apply(fit[i]) > t.apply(fit[i - 1]));
}

TEST_CASE("spearman with tied ranks") {
  const std::vector<double> a{1, 2, 3, 4}, rev{4, 3, 2, 1}, tied{1, 2, 2, 3};
  CHECK(spearman(a, a) == doctest::Approx(1.0));
  CHECK(spearman(a, rev) == doctest::Approx(-1.0));
  // ranks 1, 2.5, 2.5, 4 against 1..4: 4.5 / sqrt(4.5 * 5)
  CHECK(spearman(tied, a) == doctest::Approx(4.5 / std::sqrt(22.5)));
}

TEST_CASE("screen keeps the top scores, ties to the lower grid index") {
  const auto schema = MatchCountLandscape::make_schema(2, 3);
  const auto& grid = schema.grid();
  // score = first gene value, so indices 6,7,8 tie at the top.
  FunctionSurrogate s([&](const Strategy& x) { return static_cast<double>(x.genes[0]); });
  const std::vector<Strategy> cands{grid[8], grid[0], grid[7], grid[3], grid[6]};
  const auto kept = screen(s, schema, cands, 2);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == grid[6]);
  CHECK(kept[1] == grid[7]);
  CHECK(screen(s, schema, cands, 5).size() == 5);
  CHECK_THROWS_AS(screen(s, schema, cands, 6), ConfigError);
}

TEST_CASE("GRN surrogate scores match the network") {
  const auto schema = HyperParamSchema::desk(ModelKind::mlp);
  ScreenerNet net(3, schema.gene_count(), 8, 2);
  const std::vector<double> features{0.1, 0.5, 0.9};
  GrnSurrogate sur(net, schema, features);
  const std::vector<Strategy> cands{schema.grid()[0], schema.grid()[5]};
  const auto scores = sur.score(cands);
  Matrix f(2, 3), g(2, schema.gene_count());
  for (std::size_t i = 0; i < 2; ++i) {
    f.set_rows(i, Matrix::row_vector(features));
    g.set_rows(i, Matrix::row_vector(encode_strategy(schema, cands[i])));
  }
  const auto direct = predict_scores(net, f, g);
  CHECK(scores[0] == doctest::Approx(direct[0]));
  CHECK(scores[1] == doctest::Approx(direct[1]));
}
