#pragma once

// KNN-seeded, surrogate-screened genetic algorithm plus the baselines it is
// compared against. Every method draws strategies from the same grid and
// pays for fitness only through a FitnessFunction, whose counter is the
// shared cost measure.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metahpo/fitness.hpp"
#include "metahpo/schema.hpp"
#include "metahpo/screening_grn.hpp"

namespace metahpo {

enum class EliteRule {
  text,        // ceil(p_rem * W) elites, capped at M
  pseudocode,  // ceil(p_rem * M) elites
};

struct AgaConfig {
  std::size_t population = 10;   // M
  std::size_t offspring = 100;   // W
  std::size_t generations = 10;  // N
  double p_rem = 0.10;
  double p_mut = 0.20;
  std::size_t tau = 2;
  std::uint64_t seed = 0;
  EliteRule elite_rule = EliteRule::text;
  // Hard cap on actual evaluations for budget-matched comparisons.
  std::size_t max_evaluations = std::numeric_limits<std::size_t>::max();
  std::size_t threads = 1;

  void validate() const;
  std::size_t elite_count() const;
};

struct GenerationLog {
  std::size_t generation = 0;
  double best_fitness = 0.0;  // best so far
  double mean_fitness = 0.0;  // over this generation's population
  std::size_t actual_evals_cum = 0;
  double wall_ms = 0.0;
  std::size_t candidates = 0;  // offspring considered
  std::size_t evaluated = 0;   // offspring whose fitness was looked up
};

struct OptimizationResult {
  std::string method;
  Strategy best;
  double best_fitness = 0.0;
  FitnessRecord best_record;
  std::vector<GenerationLog> history;
  std::size_t evaluations = 0;
  double wall_ms = 0.0;
};

// Rows `generation,best_fitness,mean_fitness,actual_evals_cum,wall_ms`.
void write_history(std::ostream& out, const OptimizationResult& result, bool include_wall = true);

struct Member {
  Strategy strategy;
  double fitness = 0.0;
};

// W offspring: the top elite_count() parents (fitness descending, ties by
// grid index) copied unchanged, then uniform-crossover hybrids of two
// uniformly drawn parents, each hybrid gene mutating with probability p_mut
// to a uniform grid value. Invalid hybrids are redrawn; after 32 attempts a
// random valid strategy is used.
std::vector<Strategy> make_offspring(std::span<const Member> parents, const HyperParamSchema& schema,
                                     const AgaConfig& config, Rng& rng);

// Screened, KNN-seeded AGA. `seeds` (K <= M) start the first generation, the rest is
// random. With a surrogate, new offspring beyond tau * M per generation are
// screened out before any training; offspring already evaluated in earlier
// generations are free and skip screening. Without a surrogate every new
// offspring is evaluated.
OptimizationResult run_aga(FitnessFunction& fitness, Surrogate* surrogate,
                           std::span<const Strategy> seeds, const AgaConfig& config);

struct PsoConfig {
  std::size_t particles = 10;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  std::size_t max_iterations = 1000;
};

struct MethodContext {
  AgaConfig aga;
  PsoConfig pso;
  std::size_t budget = std::numeric_limits<std::size_t>::max();
  std::vector<Strategy> seeds;      // KNN labels
  Surrogate* surrogate = nullptr;   // screener for this task
};

// Methods: algorithm1, gs, ss, ga, aga, ga_knn, pso, bo. GS ignores the
// budget; all others stop once `budget` actual evaluations are spent.
OptimizationResult run_method(std::string_view method, FitnessFunction& fitness,
                              const MethodContext& context);

OptimizationResult grid_search(FitnessFunction& fitness, std::size_t threads);
OptimizationResult stochastic_search(FitnessFunction& fitness, std::size_t budget,
                                     std::uint64_t seed, std::size_t batch, std::size_t threads);
OptimizationResult particle_swarm(FitnessFunction& fitness, std::size_t budget, std::uint64_t seed,
                                  const PsoConfig& config);
OptimizationResult bayesian_optimization(FitnessFunction& fitness, std::size_t budget,
                                         std::uint64_t seed, std::size_t initial);

const std::vector<std::string>& method_names();

// Custom schema of `genes` genes with `values` options each; fitness is
// 1 + the number of genes equal to `target`. Evaluations are counted like
// any other fitness function but cost no training.
class MatchCountLandscape final : public FitnessFunction {
 public:
  MatchCountLandscape(std::size_t genes, std::size_t values, Strategy target);

  static HyperParamSchema make_schema(std::size_t genes, std::size_t values);
  const Strategy& target() const { return target_; }
  double value(const Strategy& s) const;

 protected:
  FitnessRecord compute(const Strategy& s) override;

 private:
  Strategy target_;
};

}  // namespace metahpo
