#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/optimizer_suite.hpp"

using namespace metahpo;

namespace {

const Strategy kTarget{{2, 0, 3, 1, 2}};

std::vector<Member> ranked_parents(const HyperParamSchema& schema, std::size_t n, Rng& rng) {
  std::vector<Member> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({schema.random_strategy(rng), static_cast<double>(i % 4)});
  return out;
}

std::string history_text(const OptimizationResult& r) {
  std::ostringstream out;
  write_history(out, r, false);
  return out.str();
}

}  // namespace

TEST_CASE("elite count under both rules") {
  AgaConfig c;
  c.population = 10;
  c.offspring = 80;
  CHECK(c.elite_count() == 8);
  c.elite_rule = EliteRule::pseudocode;
  CHECK(c.elite_count() == 1);
  c.elite_rule = EliteRule::text;
  c.p_rem = 0.5;
  CHECK(c.elite_count() == 10);  // capped at M
  c.p_rem = 0.0;
  CHECK(c.elite_count() == 0);
}

TEST_CASE("config validation") {
  AgaConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau = 11;  // 110 > W = 100
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.tau = 2;
  c.p_mut = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.p_mut = 0.2;
  c.population = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("offspring: W total, elites first in rank order") {
  const auto schema = MatchCountLandscape::make_schema(5, 4);
  Rng rng(1);
  const auto parents = ranked_parents(schema, 10, rng);
  AgaConfig c;
  c.offspring = 80;
  const auto kids = make_offspring(parents, schema, c, rng);
  REQUIRE(kids.size() == 80);
  std::vector<Member> sorted = parents;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const Member& a, const Member& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    return schema.grid_index(a.strategy) < schema.grid_index(b.strategy);
  });
  for (std::size_t i = 0; i < 8; ++i) CHECK(kids[i] == sorted[i].strategy);
}

TEST_CASE("offspring without mutation only recombine parent genes") {
  const auto schema = MatchCountLandscape::make_schema(5, 4);
  const std::vector<Member> parents{{Strategy{{0, 0, 0, 0, 0}}, 1.0}, {Strategy{{1, 1, 1, 1, 1}}, 2.0}};
  AgaConfig c;
  c.population = 2;
  c.offspring = 4002;
  c.tau = 1;
  c.p_rem = 0.0;
  c.p_mut = 0.0;
  Rng rng(2);
  const auto kids = make_offspring(parents, schema, c, rng);
  std::size_t ones = 0, total = 0;
  for (const Strategy& k : kids) {
    for (auto v : k.genes) {
      CHECK(v <= 1);
      ones += v;
      ++total;
    }
  }
  // Two uniform parent draws and a fair per-gene coin: P(gene from B) = 1/2.
  const double p = static_cast<double>(ones) / static_cast<double>(total);
  CHECK(std::abs(p - 0.5) < 4.0 * std::sqrt(0.25 / static_cast<double>(total)));
}

TEST_CASE("offspring with p_mut = 1 are uniform per gene (chi-square)") {
  const auto schema = MatchCountLandscape::make_schema(5, 4);
  const std::vector<Member> parents{{Strategy{{0, 0, 0, 0, 0}}, 1.0}};
  AgaConfig c;
  c.population = 1;
  c.offspring = 4000;
  c.tau = 1;
  c.p_rem = 0.0;
  c.p_mut = 1.0;
  Rng rng(3);
  const auto kids = make_offspring(parents, schema, c, rng);
  for (std::size_t g = 0; g < 5; ++g) {
    std::array<double, 4> counts{};
    for (const Strategy& k : kids) counts[k.genes[g]] += 1.0;
    double chi = 0.0;
    for (double n : counts) chi += (n - 1000.0) * (n - 1000.0) / 1000.0;
    CHECK(chi < 16.27);  // 3 dof, p = 0.001
  }
}

TEST_CASE("offspring are always valid on a constrained grid") {
  const auto schema = HyperParamSchema::full(ModelKind::adnn);
  Rng rng(4);
  std::vector<Member> parents;
  for (int i = 0; i < 10; ++i) parents.push_back({schema.random_strategy(rng), 1.0 * i});
  AgaConfig c;
  c.p_mut = 0.9;
  for (int rep = 0; rep < 5; ++rep) {
    for (const Strategy& k : make_offspring(parents, schema, c, rng)) CHECK(schema.is_valid(k));
  }
}

TEST_CASE("AGA with an exact surrogate finds the toy optimum") {
  MatchCountLandscape f(5, 4, kTarget);
  FunctionSurrogate oracle([&](const Strategy& s) { return f.value(s); });
  AgaConfig c;
  c.seed = 9;
  const auto r = run_aga(f, &oracle, {}, c);
  CHECK(r.best == kTarget);
  CHECK(r.best_fitness == 6.0);
  CHECK(r.method == "aga");
}

TEST_CASE("AGA accounting: tau * M per generation and the budget cap") {
  MatchCountLandscape f(5, 4, kTarget);
  FunctionSurrogate oracle([&](const Strategy& s) { return f.value(s); });
  AgaConfig c;
  c.seed = 10;
  const auto r = run_aga(f, &oracle, {}, c);
  CHECK(r.evaluations == f.evaluations());
  REQUIRE(r.history.size() == 11);
  CHECK(r.history[0].actual_evals_cum <= c.population);
  for (std::size_t g = 1; g < r.history.size(); ++g) {
    CHECK(r.history[g].actual_evals_cum - r.history[g - 1].actual_evals_cum <= c.tau * c.population);
    CHECK(r.history[g].best_fitness >= r.history[g - 1].best_fitness);
    CHECK(r.history[g].candidates == c.offspring);
  }
  CHECK(r.evaluations <= c.population + c.generations * c.tau * c.population);

  MatchCountLandscape g(5, 4, kTarget);
  c.max_evaluations = 37;
  const auto capped = run_aga(g, nullptr, {}, c);
  CHECK(capped.evaluations == 37);
  CHECK(g.evaluations() == 37);
  CHECK(capped.method == "ga");
}

TEST_CASE("AGA keeps seeds and rejects too many") {
  MatchCountLandscape f(5, 4, kTarget);
  AgaConfig c;
  c.generations = 0;
  const std::vector<Strategy> seeds{kTarget};
  const auto r = run_aga(f, nullptr, seeds, c);
  CHECK(r.best == kTarget);
  CHECK(r.evaluations == 10);
  CHECK(r.method == "ga_knn");
  std::vector<Strategy> many(11, kTarget);
  CHECK_THROWS_AS(run_aga(f, nullptr, many, c), ConfigError);
}

TEST_CASE("AGA is deterministic across thread counts") {
  AgaConfig c;
  c.seed = 77;
  MatchCountLandscape a(5, 4, kTarget), b(5, 4, kTarget);
  FunctionSurrogate sa([&](const Strategy& s) { return a.value(s); });
  FunctionSurrogate sb([&](const Strategy& s) { return b.value(s); });
  c.threads = 1;
  const auto ra = run_aga(a, &sa, {}, c);
  c.threads = 4;
  const auto rb = run_aga(b, &sb, {}, c);
  CHECK(ra.best == rb.best);
  CHECK(ra.evaluations == rb.evaluations);
  CHECK(history_text(ra) == history_text(rb));
}

TEST_CASE("grid search and a full stochastic search agree") {
  MatchCountLandscape f(4, 3, Strategy{{1, 2, 0, 1}});
  const auto gs = grid_search(f, 2);
  CHECK(gs.evaluations == 81);
  CHECK(gs.best == f.target());
  MatchCountLandscape g(4, 3, Strategy{{1, 2, 0, 1}});
  const auto ss = stochastic_search(g, 1000, 5, 10, 1);
  CHECK(ss.evaluations == 81);
  CHECK(ss.best == gs.best);
  CHECK(ss.history.size() == 9);
  MatchCountLandscape h(4, 3, Strategy{{1, 2, 0, 1}});
  CHECK(stochastic_search(h, 20, 5, 10, 1).evaluations == 20);
}

TEST_CASE("PSO and BO respect the budget and land on the grid") {
  MatchCountLandscape f(5, 4, kTarget);
  const auto pso = particle_swarm(f, 60, 3, PsoConfig{});
  CHECK(pso.evaluations <= 60);
  CHECK(f.schema().is_valid(pso.best));
  CHECK(pso.best_fitness == f.value(pso.best));
  for (std::size_t i = 1; i < pso.history.size(); ++i) CHECK(pso.history[i].best_fitness >= pso.history[i - 1].best_fitness);

  MatchCountLandscape g(4, 3, Strategy{{1, 2, 0, 1}});
  const auto bo = bayesian_optimization(g, 30, 3, 10);
  CHECK(bo.evaluations == 30);
  CHECK(bo.best_fitness == g.value(bo.best));
  CHECK(bo.best_fitness >= 4.0);
}

TEST_CASE("run_method dispatch and dependencies") {
  MatchCountLandscape f(5, 4, kTarget);
  MethodContext ctx;
  ctx.budget = 40;
  CHECK_THROWS_AS(run_method("algorithm1", f, ctx), DependencyError);
  CHECK_THROWS_AS(run_method("ga_knn", f, ctx), DependencyError);
  CHECK_THROWS_AS(run_method("aga", f, ctx), DependencyError);
  CHECK_THROWS_AS(run_method("simplex", f, ctx), ConfigError);
  FunctionSurrogate oracle([&](const Strategy& s) { return f.value(s); });
  ctx.surrogate = &oracle;
  ctx.seeds = {Strategy{{0, 0, 0, 0, 0}}};
  for (const std::string& m : method_names()) {
    MatchCountLandscape fresh(5, 4, kTarget);
    const auto r = run_method(m, fresh, ctx);
    INFO(m);
    CHECK(r.method == m);
    if (m != "gs") CHECK(r.evaluations <= 40);
  }
}
