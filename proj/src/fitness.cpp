#include "metahpo/fitness.hpp"

#include <algorithm>
#include <cmath>

#include "metahpo/errors.hpp"
#include "metahpo/parallel.hpp"

namespace metahpo {

namespace {
std::atomic<std::size_t> g_training_runs{0};
}

std::size_t training_runs() { return g_training_runs.load(); }

double fitness_from_mse(double mse) {
  return mse > 0.0 ? std::min(1.0 / mse, std::numeric_limits<double>::max())
                   : std::numeric_limits<double>::max();
}

FitnessRecord FitnessFunction::evaluate(const Strategy& s) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(s); it != memo_.end()) return it->second;
  }
  schema_.require_valid(s);
  FitnessRecord record = compute(s);
  std::lock_guard lock(mutex_);
  auto [it, inserted] = memo_.emplace(s, record);
  if (inserted) ++evaluations_;
  return it->second;
}

std::vector<FitnessRecord> FitnessFunction::evaluate_batch(std::span<const Strategy> strategies,
                                                           std::size_t threads) {
  std::map<Strategy, std::size_t> slot;
  std::vector<Strategy> distinct;
  for (const Strategy& s : strategies) {
    if (slot.emplace(s, distinct.size()).second) distinct.push_back(s);
  }
  std::vector<FitnessRecord> results(distinct.size());
  parallel_for(distinct.size(), threads, [&](std::size_t i) { results[i] = evaluate(distinct[i]); });
  std::vector<FitnessRecord> out;
  out.reserve(strategies.size());
  for (const Strategy& s : strategies) out.push_back(results[slot.at(s)]);
  return out;
}

bool FitnessFunction::is_known(const Strategy& s) const {
  std::lock_guard lock(mutex_);
  return memo_.contains(s);
}

std::string FitnessCache::key(int task_id, ModelKind kind, const HyperParamSchema& schema,
                              const Strategy& s, std::uint64_t seed) {
  return std::to_string(task_id) + '|' + std::string(to_string(kind)) + '|' + schema.describe(s) +
         '|' + std::to_string(seed);
}

bool FitnessCache::lookup(const std::string& key, FitnessRecord& out) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  out = it->second;
  return true;
}

void FitnessCache::store(const std::string& key, const FitnessRecord& record) {
  std::lock_guard lock(mutex_);
  entries_[key] = record;
}

std::size_t FitnessCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

LearnerTask make_task(const TrafficSeries& series, double test_fraction, double validation_fraction) {
  LearnerTask task;
  task.task_id = series.cell_id;
  task.series = normalize(series);
  task.ranges = split_ranges(task.series.values.size(), test_fraction, validation_fraction);
  return task;
}

FitnessRecord compute_fitness(const HyperParamSchema& schema, const Strategy& strategy,
                              const LearnerTask& task, const TrainConfig& base, std::uint64_t seed) {
  const auto window = static_cast<std::size_t>(std::llround(schema.value(strategy, genes::window)));
  const SampleSplit split = make_split(task.series, task.ranges, window);
  if (split.train.empty() || split.validation.empty()) {
    throw ConfigError("task " + std::to_string(task.task_id) +
                      " is too short for window " + std::to_string(window));
  }
  TrainConfig config = base;
  config.learning_rate = schema.value(strategy, genes::learning_rate);
  config.seed = seed;

  ++g_training_runs;
  FitnessRecord record;
  auto model = build_model(schema, strategy, seed);
  try {
    train(*model, split.train, config);
  } catch (const TrainingError&) {
    record.diverged = true;
    return record;
  }
  const EvalReport validation = evaluate(*model, split.validation);
  if (!std::isfinite(validation.mse)) {
    record.diverged = true;
    return record;
  }
  record.validation_mse = validation.mse;
  record.fitness = fitness_from_mse(validation.mse);
  if (!split.test.empty()) {
    const EvalReport test = evaluate(*model, split.test);
    record.test_mse = test.mse;
    record.test_r2 = test.r2;
  }
  return record;
}

LearnerFitness::LearnerFitness(HyperParamSchema schema, std::shared_ptr<const LearnerTask> task,
                               TrainConfig train, std::uint64_t seed,
                               std::shared_ptr<FitnessCache> shared)
    : FitnessFunction(std::move(schema)), task_(std::move(task)), train_(train), seed_(seed),
      shared_(std::move(shared)) {
  if (!task_) throw DependencyError("LearnerFitness needs a task");
}

FitnessRecord LearnerFitness::compute(const Strategy& s) {
  const std::string key = FitnessCache::key(task_->task_id, schema().kind(), schema(), s, seed_);
  FitnessRecord record;
  if (shared_ && shared_->lookup(key, record)) return record;
  record = compute_fitness(schema(), s, *task_, train_, seed_);
  if (shared_) shared_->store(key, record);
  return record;
}

}  // namespace metahpo
