#include "metahpo/optimizer_suite.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>

#include "metahpo/errors.hpp"
#include "metahpo/parallel.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Fitness descending, then grid index ascending.
void rank_members(std::vector<Member>& members, const HyperParamSchema& schema) {
  std::stable_sort(members.begin(), members.end(), [&](const Member& a, const Member& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    return schema.grid_index(a.strategy) < schema.grid_index(b.strategy);
  });
}

std::vector<Strategy> distinct_in_order(std::span<const Strategy> list) {
  std::set<Strategy> seen;
  std::vector<Strategy> out;
  for (const Strategy& s : list)
    if (seen.insert(s).second) out.push_back(s);
  return out;
}

// Tracks cost against a budget and the best strategy seen by one run.
class RunState {
 public:
  RunState(FitnessFunction& f, std::string method, std::size_t budget)
      : f_(f), start_evals_(f.evaluations()), budget_(budget), start_(Clock::now()) {
    result_.method = std::move(method);
  }

  std::size_t spent() const { return f_.evaluations() - start_evals_; }
  std::size_t remaining() const { return budget_ > spent() ? budget_ - spent() : 0; }
  bool exhausted() const { return remaining() == 0; }

  // Looks up every strategy in `list`: known ones are free, unknown ones are
  // evaluated in order while budget remains. Returns what was looked up.
  std::vector<Member> evaluate(std::span<const Strategy> list, std::size_t threads) {
    std::vector<Strategy> allowed;
    std::size_t fresh = 0;
    const std::size_t room = remaining();
    for (const Strategy& s : distinct_in_order(list)) {
      if (f_.is_known(s)) {
        allowed.push_back(s);
      } else if (fresh < room) {
        allowed.push_back(s);
        ++fresh;
      }
    }
    const auto records = f_.evaluate_batch(allowed, threads);
    std::vector<Member> out;
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      out.push_back({allowed[i], records[i].fitness});
      offer(allowed[i], records[i]);
    }
    return out;
  }

  void offer(const Strategy& s, const FitnessRecord& r) {
    const auto& schema = f_.schema();
    if (!has_best_ || r.fitness > result_.best_fitness ||
        (r.fitness == result_.best_fitness && schema.grid_index(s) < schema.grid_index(result_.best))) {
      has_best_ = true;
      result_.best = s;
      result_.best_fitness = r.fitness;
      result_.best_record = r;
    }
  }

  void log(std::size_t generation, std::span<const Member> population, std::size_t candidates,
           std::size_t evaluated) {
    GenerationLog row;
    row.generation = generation;
    row.best_fitness = result_.best_fitness;
    double sum = 0.0;
    for (const Member& m : population) sum += m.fitness;
    row.mean_fitness = population.empty() ? 0.0 : sum / static_cast<double>(population.size());
    row.actual_evals_cum = spent();
    row.wall_ms = elapsed_ms(start_);
    row.candidates = candidates;
    row.evaluated = evaluated;
    result_.history.push_back(row);
  }

  OptimizationResult finish() {
    if (!has_best_) throw ConfigError(result_.method + ": budget allowed no evaluation");
    result_.evaluations = spent();
    result_.wall_ms = elapsed_ms(start_);
    return std::move(result_);
  }

 private:
  FitnessFunction& f_;
  std::size_t start_evals_;
  std::size_t budget_;
  Clock::time_point start_;
  OptimizationResult result_;
  bool has_best_ = false;
};

Strategy random_distinct(const HyperParamSchema& schema, std::span<const Strategy> taken, Rng& rng) {
  Strategy s = schema.random_strategy(rng);
  for (int attempt = 0; attempt < 64; ++attempt) {
    if (std::find(taken.begin(), taken.end(), s) == taken.end()) break;
    s = schema.random_strategy(rng);
  }
  return s;
}

}  // namespace

// --- configuration ---------------------------------------------------------

void AgaConfig::validate() const {
  if (population == 0) throw ConfigError("population size M must be at least 1");
  if (p_rem < 0.0 || p_rem > 1.0 || p_mut < 0.0 || p_mut > 1.0) {
    throw ConfigError("p_rem and p_mut must lie in [0, 1]");
  }
  if (tau == 0 || tau * population > offspring) {
    throw ConfigError("screening budget tau * M must lie in [1, W]");
  }
}

std::size_t AgaConfig::elite_count() const {
  const double base = elite_rule == EliteRule::text ? static_cast<double>(offspring)
                                                    : static_cast<double>(population);
  // The small offset keeps products like 0.1 * 80 from rounding up past 8.
  const auto n = static_cast<std::size_t>(std::ceil(p_rem * base - 1e-9));
  return std::min({n, population, offspring});
}

void write_history(std::ostream& out, const OptimizationResult& result, bool include_wall) {
  out << "generation,best_fitness,mean_fitness,actual_evals_cum" << (include_wall ? ",wall_ms" : "")
      << '\n';
  for (const GenerationLog& g : result.history) {
    out << g.generation << ',' << format_double(g.best_fitness) << ','
        << format_double(g.mean_fitness) << ',' << g.actual_evals_cum;
    if (include_wall) out << ',' << format_double(g.wall_ms);
    out << '\n';
  }
}

// --- genetic operators -----------------------------------------------------

std::vector<Strategy> make_offspring(std::span<const Member> parents, const HyperParamSchema& schema,
                                     const AgaConfig& config, Rng& rng) {
  if (parents.empty()) throw ConfigError("make_offspring needs parents");
  std::vector<Member> ranked(parents.begin(), parents.end());
  rank_members(ranked, schema);
  std::vector<Strategy> children;
  children.reserve(config.offspring);
  const std::size_t elites = std::min(config.elite_count(), ranked.size());
  for (std::size_t i = 0; i < elites; ++i) children.push_back(ranked[i].strategy);

  std::uniform_int_distribution<std::size_t> pick(0, parents.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& genes = schema.genes();
  while (children.size() < config.offspring) {
    Strategy child;
    bool valid = false;
    for (int attempt = 0; attempt < 32 && !valid; ++attempt) {
      const Strategy& a = parents[pick(rng)].strategy;
      const Strategy& b = parents[pick(rng)].strategy;
      child.genes.resize(genes.size());
      for (std::size_t g = 0; g < genes.size(); ++g) {
        child.genes[g] = unit(rng) < 0.5 ? a.genes[g] : b.genes[g];
        if (unit(rng) < config.p_mut) {
          std::uniform_int_distribution<std::size_t> value(0, genes[g].values.size() - 1);
          child.genes[g] = static_cast<std::uint16_t>(value(rng));
        }
      }
      valid = schema.is_valid(child);
    }
    if (!valid) child = schema.random_strategy(rng);
    children.push_back(std::move(child));
  }
  return children;
}

OptimizationResult run_aga(FitnessFunction& fitness, Surrogate* surrogate,
                           std::span<const Strategy> seeds, const AgaConfig& config) {
  config.validate();
  if (seeds.size() > config.population) {
    throw ConfigError("K = " + std::to_string(seeds.size()) + " seeds exceed population M = " +
                      std::to_string(config.population));
  }
  const HyperParamSchema& schema = fitness.schema();
  for (const Strategy& s : seeds) schema.require_valid(s);
  RunState state(fitness, surrogate ? (seeds.empty() ? "aga" : "algorithm1")
                                    : (seeds.empty() ? "ga" : "ga_knn"),
                 config.max_evaluations);

  Rng rng(split_seed(config.seed, 0));
  std::vector<Strategy> initial(seeds.begin(), seeds.end());
  while (initial.size() < config.population) initial.push_back(random_distinct(schema, initial, rng));
  std::vector<Member> population = state.evaluate(initial, config.threads);
  state.log(0, population, initial.size(), population.size());

  const std::size_t screen_budget = config.tau * config.population;
  for (std::size_t gen = 1; gen <= config.generations && !state.exhausted(); ++gen) {
    Rng gen_rng(split_seed(config.seed, gen));
    const std::vector<Strategy> children = make_offspring(population, schema, config, gen_rng);
    std::vector<Strategy> known, fresh;
    for (const Strategy& s : distinct_in_order(children)) (fitness.is_known(s) ? known : fresh).push_back(s);
    if (surrogate != nullptr && fresh.size() > screen_budget) {
      fresh = screen(*surrogate, schema, fresh, screen_budget);
    }
    std::vector<Strategy> chosen = known;
    chosen.insert(chosen.end(), fresh.begin(), fresh.end());
    std::vector<Member> pool = state.evaluate(chosen, config.threads);
    rank_members(pool, schema);
    if (pool.size() > config.population) pool.resize(config.population);
    if (pool.size() < config.population) {
      rank_members(population, schema);
      for (const Member& m : population) {
        if (pool.size() == config.population) break;
        const bool present = std::any_of(pool.begin(), pool.end(),
                                         [&](const Member& p) { return p.strategy == m.strategy; });
        if (!present) pool.push_back(m);
      }
    }
    population = std::move(pool);
    state.log(gen, population, children.size(), chosen.size());
  }
  return state.finish();
}

// --- baselines -------------------------------------------------------------

OptimizationResult grid_search(FitnessFunction& fitness, std::size_t threads) {
  RunState state(fitness, "gs", std::numeric_limits<std::size_t>::max());
  const auto members = state.evaluate(fitness.schema().grid(), threads);
  state.log(0, members, members.size(), members.size());
  return state.finish();
}

OptimizationResult stochastic_search(FitnessFunction& fitness, std::size_t budget,
                                     std::uint64_t seed, std::size_t batch, std::size_t threads) {
  const auto& grid = fitness.schema().grid();
  RunState state(fitness, "ss", budget);
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(split_seed(seed, 0));
  std::shuffle(order.begin(), order.end(), rng);
  batch = std::max<std::size_t>(batch, 1);
  std::size_t round = 0;
  for (std::size_t start = 0; start < order.size() && !state.exhausted(); start += batch, ++round) {
    std::vector<Strategy> draw;
    for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) draw.push_back(grid[order[i]]);
    const auto members = state.evaluate(draw, threads);
    state.log(round, members, draw.size(), members.size());
  }
  return state.finish();
}

namespace {

// Nearest valid grid strategy to a point of the encoded cube.
Strategy nearest_valid(const std::vector<std::vector<double>>& codes, const HyperParamSchema& schema,
                       std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < codes.size(); ++i) {
    double d = 0.0;
    for (std::size_t g = 0; g < x.size(); ++g) d += (codes[i][g] - x[g]) * (codes[i][g] - x[g]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return schema.grid()[best];
}

std::vector<std::vector<double>> grid_codes(const HyperParamSchema& schema) {
  const GeneEncoder encoder(schema);
  std::vector<std::vector<double>> codes;
  for (const Strategy& s : schema.grid()) codes.push_back(encoder.encode(s));
  return codes;
}

}  // namespace

OptimizationResult particle_swarm(FitnessFunction& fitness, std::size_t budget, std::uint64_t seed,
                                  const PsoConfig& config) {
  const HyperParamSchema& schema = fitness.schema();
  const auto codes = grid_codes(schema);
  const std::size_t dims = schema.gene_count();
  const std::size_t n = std::max<std::size_t>(config.particles, 1);
  RunState state(fitness, "pso", budget);
  Rng rng(split_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> x(n, std::vector<double>(dims)), v = x, pbest = x;
  std::vector<double> pbest_f(n, -1.0);
  std::vector<double> gbest(dims);
  double gbest_f = -1.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t d = 0; d < dims; ++d) {
      x[p][d] = unit(rng);
      v[p][d] = 0.2 * (unit(rng) - 0.5);
    }
  }
  for (std::size_t it = 0; it < config.max_iterations && !state.exhausted(); ++it) {
    std::vector<Strategy> at(n);
    for (std::size_t p = 0; p < n; ++p) at[p] = nearest_valid(codes, schema, x[p]);
    const auto members = state.evaluate(at, 1);
    std::vector<Member> swarm;
    for (std::size_t p = 0; p < n; ++p) {
      const auto found = std::find_if(members.begin(), members.end(),
                                      [&](const Member& m) { return m.strategy == at[p]; });
      if (found == members.end()) continue;  // over budget
      swarm.push_back(*found);
      if (found->fitness > pbest_f[p]) {
        pbest_f[p] = found->fitness;
        pbest[p] = x[p];
      }
      if (found->fitness > gbest_f) {
        gbest_f = found->fitness;
        gbest = x[p];
      }
    }
    state.log(it, swarm, n, swarm.size());
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double r1 = unit(rng), r2 = unit(rng);
        v[p][d] = config.inertia * v[p][d] + config.cognitive * r1 * (pbest[p][d] - x[p][d]) +
                  config.social * r2 * (gbest[d] - x[p][d]);
        x[p][d] += v[p][d];
        if (x[p][d] < 0.0 || x[p][d] > 1.0) {
          x[p][d] = std::clamp(x[p][d], 0.0, 1.0);
          v[p][d] = 0.0;
        }
      }
    }
  }
  return state.finish();
}

OptimizationResult bayesian_optimization(FitnessFunction& fitness, std::size_t budget,
                                         std::uint64_t seed, std::size_t initial) {
  const HyperParamSchema& schema = fitness.schema();
  const auto codes = grid_codes(schema);
  const std::size_t total = codes.size();
  RunState state(fitness, "bo", budget);
  Rng rng(split_seed(seed, 0));

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> observed;
  std::vector<double> fit;
  std::vector<bool> seen(total, false);

  auto observe = [&](std::span<const std::size_t> picks, std::size_t round) {
    std::vector<Strategy> list;
    for (std::size_t i : picks) list.push_back(schema.grid()[i]);
    const auto members = state.evaluate(list, 1);
    for (const Member& m : members) {
      const std::size_t i = schema.grid_index(m.strategy);
      if (seen[i]) continue;
      seen[i] = true;
      observed.push_back(i);
      fit.push_back(m.fitness);
    }
    state.log(round, members, list.size(), members.size());
  };

  const std::size_t first = std::min({std::max<std::size_t>(initial, 1), total, budget});
  observe(std::span(order).first(first), 0);

  constexpr std::array<double, 6> kLengths{0.1, 0.2, 0.35, 0.5, 0.75, 1.0};
  constexpr double kNoise = 1e-6;
  for (std::size_t round = 1; !state.exhausted() && observed.size() < total; ++round) {
    const std::size_t m = observed.size();
    // Targets: standardized log fitness; fitness 0 takes the smallest positive value.
    double floor = std::numeric_limits<double>::infinity();
    for (double f : fit)
      if (f > 0.0) floor = std::min(floor, f);
    if (!std::isfinite(floor)) floor = 1.0;
    Eigen::VectorXd y(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) y(static_cast<Eigen::Index>(i)) = std::log(std::max(fit[i], floor));
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    y = (y.array() - mean) / (sd > 0.0 ? sd : 1.0);

    auto kernel = [&](std::size_t a, std::size_t b, double length) {
      double d = 0.0;
      for (std::size_t g = 0; g < codes[a].size(); ++g) d += (codes[a][g] - codes[b][g]) * (codes[a][g] - codes[b][g]);
      return std::exp(-d / (2.0 * length * length));
    };
    double best_lml = -std::numeric_limits<double>::infinity();
    double length = kLengths.front();
    Eigen::LLT<Eigen::MatrixXd> best_llt;
    Eigen::VectorXd best_alpha;
    for (double l : kLengths) {
      Eigen::MatrixXd k(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              kernel(observed[i], observed[j], l) + (i == j ? kNoise : 0.0);
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd alpha = llt.solve(y);
      const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const double lml = -0.5 * y.dot(alpha) - 0.5 * log_det;
      if (lml > best_lml) {
        best_lml = lml;
        length = l;
        best_llt = llt;
        best_alpha = alpha;
      }
    }
    if (!std::isfinite(best_lml)) throw TrainingError("bo: kernel matrix is not positive definite", round);

    const double incumbent = y.maxCoeff();
    constexpr double kXi = 0.01;
    std::size_t pick = total;
    double best_ei = -1.0;
    for (std::size_t c = 0; c < total; ++c) {
      if (seen[c]) continue;
      Eigen::VectorXd ks(static_cast<Eigen::Index>(m));
      for (std::size_t i = 0; i < m; ++i) ks(static_cast<Eigen::Index>(i)) = kernel(c, observed[i], length);
      const double mu = ks.dot(best_alpha);
      const double var = std::max(1.0 - ks.dot(best_llt.solve(ks)), 1e-12);
      const double sigma = std::sqrt(var);
      const double z = (mu - incumbent - kXi) / sigma;
      const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double ei = (mu - incumbent - kXi) * cdf + sigma * pdf;
      if (ei > best_ei) {
        best_ei = ei;
        pick = c;
      }
    }
    if (pick == total) break;
    const std::size_t one[] = {pick};
    observe(one, round);
  }
  return state.finish();
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"algorithm1", "gs", "ss",  "ga",
                                              "aga",        "ga_knn", "pso", "bo"};
  return names;
}

OptimizationResult run_method(std::string_view method, FitnessFunction& fitness,
                              const MethodContext& context) {
  AgaConfig aga = context.aga;
  aga.max_evaluations = std::min(aga.max_evaluations, context.budget);
  auto need_surrogate = [&] {
    if (context.surrogate == nullptr) throw DependencyError(std::string(method) + " needs a trained screener");
  };
  auto need_seeds = [&] {
    if (context.seeds.empty()) throw DependencyError(std::string(method) + " needs KNN seeds");
  };
  if (method == "algorithm1") {
    need_surrogate();
    need_seeds();
    return run_aga(fitness, context.surrogate, context.seeds, aga);
  }
  if (method == "aga") {
    need_surrogate();
    return run_aga(fitness, context.surrogate, {}, aga);
  }
  if (method == "ga_knn") {
    need_seeds();
    return run_aga(fitness, nullptr, context.seeds, aga);
  }
  if (method == "ga") return run_aga(fitness, nullptr, {}, aga);
  if (method == "gs") return grid_search(fitness, aga.threads);
  if (method == "ss") {
    return stochastic_search(fitness, context.budget, aga.seed, aga.population, aga.threads);
  }
  if (method == "pso") return particle_swarm(fitness, context.budget, aga.seed, context.pso);
  if (method == "bo") return bayesian_optimization(fitness, context.budget, aga.seed, aga.population);
  throw ConfigError("unknown method '" + std::string(method) + "'");
}

// --- toy landscape ---------------------------------------------------------

HyperParamSchema MatchCountLandscape::make_schema(std::size_t genes, std::size_t values) {
  std::vector<Gene> list;
  std::vector<double> options(values);
  std::iota(options.begin(), options.end(), 0.0);
  for (std::size_t g = 0; g < genes; ++g) list.push_back({"g" + std::to_string(g + 1), options, false});
  return HyperParamSchema(ModelKind::custom, std::move(list));
}

MatchCountLandscape::MatchCountLandscape(std::size_t genes, std::size_t values, Strategy target)
    : FitnessFunction(make_schema(genes, values)), target_(std::move(target)) {
  schema().require_valid(target_);
}

double MatchCountLandscape::value(const Strategy& s) const {
  double matches = 0.0;
  for (std::size_t g = 0; g < s.genes.size(); ++g) matches += s.genes[g] == target_.genes[g] ? 1.0 : 0.0;
  return 1.0 + matches;
}

FitnessRecord MatchCountLandscape::compute(const Strategy& s) {
  FitnessRecord r;
  r.fitness = value(s);
  r.validation_mse = 1.0 / r.fitness;
  return r;
}

}  // namespace metahpo
