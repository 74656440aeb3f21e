#pragma once

// Fitness of a strategy = 1 / validation MSE of the base learner trained with
// it. Every optimizer talks to a FitnessFunction, which memoizes results and
// counts actual evaluations: a strategy costs one evaluation the first time
// a run needs it and nothing afterwards.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "metahpo/base_learner.hpp"
#include "metahpo/schema.hpp"
#include "metahpo/traffic_data.hpp"

namespace metahpo {

struct FitnessRecord {
  double fitness = 0.0;
  double validation_mse = std::numeric_limits<double>::infinity();
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double test_r2 = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
};

// 1 / mse; a zero MSE maps to the largest finite double.
double fitness_from_mse(double mse);

class FitnessFunction {
 public:
  explicit FitnessFunction(HyperParamSchema schema) : schema_(std::move(schema)) {}
  virtual ~FitnessFunction() = default;
  FitnessFunction(const FitnessFunction&) = delete;
  FitnessFunction& operator=(const FitnessFunction&) = delete;

  const HyperParamSchema& schema() const noexcept { return schema_; }

  FitnessRecord evaluate(const Strategy& s);
  // Evaluates distinct strategies in parallel; duplicates share one evaluation.
  std::vector<FitnessRecord> evaluate_batch(std::span<const Strategy> strategies,
                                            std::size_t threads);
  bool is_known(const Strategy& s) const;
  std::size_t evaluations() const noexcept { return evaluations_.load(); }

 protected:
  virtual FitnessRecord compute(const Strategy& s) = 0;

 private:
  HyperParamSchema schema_;
  mutable std::mutex mutex_;
  std::map<Strategy, FitnessRecord> memo_;
  std::atomic<std::size_t> evaluations_{0};
};

// Shared across runs, keyed by (task, kind, strategy, seed). Concurrent writes
// to one key are last-write-wins; values are deterministic.
class FitnessCache {
 public:
  static std::string key(int task_id, ModelKind kind, const HyperParamSchema& schema,
                         const Strategy& s, std::uint64_t seed);
  bool lookup(const std::string& key, FitnessRecord& out) const;
  void store(const std::string& key, const FitnessRecord& record);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, FitnessRecord> entries_;
};

struct LearnerTask {
  int task_id = 0;
  NormalizedSeries series;
  SplitRanges ranges;
};

LearnerTask make_task(const TrafficSeries& series, double test_fraction, double validation_fraction);

// Trains the strategy's model on the train split and scores it on validation
// (and on test when the test split is non-empty). Divergence gives fitness 0.
FitnessRecord compute_fitness(const HyperParamSchema& schema, const Strategy& strategy,
                              const LearnerTask& task, const TrainConfig& base, std::uint64_t seed);

class LearnerFitness final : public FitnessFunction {
 public:
  LearnerFitness(HyperParamSchema schema, std::shared_ptr<const LearnerTask> task,
                 TrainConfig train, std::uint64_t seed,
                 std::shared_ptr<FitnessCache> shared = nullptr);

  const LearnerTask& task() const { return *task_; }

 protected:
  FitnessRecord compute(const Strategy& s) override;

 private:
  std::shared_ptr<const LearnerTask> task_;
  TrainConfig train_;
  std::uint64_t seed_;
  std::shared_ptr<FitnessCache> shared_;
};

// Process-wide number of base-learner trainings actually run.
std::size_t training_runs();

}  // namespace metahpo
