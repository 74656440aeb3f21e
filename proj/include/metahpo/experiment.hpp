#pragma once

// Pipeline driver shared by the command-line tool and the acceptance runner.
//
// Stages and the artifacts they leave under the output directory:
//   synth / ingest   series.csv (+ impute_flags.csv for ingest)
//   build-meta       tables/task_<id>.csv, characteristics.csv
//   entropy-report   entropy_report.csv, meta_features.txt, task_features.csv,
//                    meta_samples.csv, screener_corpus.csv
//   train-distance   pairs.csv, distance.params, distance_loss.csv, retrievals.csv
//   train-screener   screener.params, screener_loss.csv, screener_holdout.csv,
//                    screener_config.txt
//   optimize         runs/algorithm1_*.csv, runs/algorithm1_*.log, results/algorithm1.csv
//   baseline         the same per baseline method
//   report           report.csv, report.txt
// manifest.json records the config hash and, per stage, a completion time and
// the files it wrote. Entropy selection needs grid-search optima, so
// entropy-report runs after build-meta.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metahpo/base_learner.hpp"
#include "metahpo/fitness.hpp"
#include "metahpo/knn_selector.hpp"
#include "metahpo/meta_features.hpp"
#include "metahpo/meta_store.hpp"
#include "metahpo/optimizer_suite.hpp"
#include "metahpo/schema.hpp"
#include "metahpo/screening_grn.hpp"

namespace metahpo {

inline constexpr const char* kVersion = "0.1.0";

// key = value text, '#' comments. Every key has a default; unknown keys are
// a ConfigError.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Sorted `key = value` lines of every result-relevant key.
  std::string canonical() const;
  // Excludes out and threads, which do not change results.
  std::string hash() const;

  std::string data() const { return get("data"); }
  std::size_t grid_side() const;
  std::size_t cells() const;
  std::size_t intervals() const;
  ModelKind model() const;
  HyperParamSchema schema() const;
  std::size_t meta_tasks() const;
  std::size_t test_tasks() const;
  std::size_t k() const;
  std::size_t features() const;
  std::size_t bins() const;
  double test_fraction() const;
  double validation_fraction() const;
  TrainConfig train() const;
  ScreenerConfig screener() const;
  double screener_holdout() const;
  DistanceConfig distance() const;
  AgaConfig aga() const;
  PsoConfig pso() const;
  std::vector<std::string> baselines() const;
  // Actual-evaluation budget for budgeted methods; "auto" = M + tau * M * N,
  // further capped by aga.max_evaluations.
  std::size_t budget() const;
  std::size_t repeats() const;
  std::uint64_t seed() const;
  std::size_t threads() const;
  std::filesystem::path out() const { return get("out"); }

  // Checks every typed value and the K <= |S^meta| invariant.
  void validate() const;

 private:
  std::size_t size_value(const std::string& key) const;
  double real_value(const std::string& key) const;

  std::map<std::string, std::string> entries_;
};

struct RunRecord {
  std::string method;
  int task_id = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::size_t best_index = 0;
  std::string best_strategy;
  double validation_mse = 0.0;
  double test_mse = 0.0;
  double test_r2 = 0.0;
  std::size_t actual_evals = 0;
  double wall_ms = 0.0;
};

struct ReportRow {
  std::string method;
  double mean_mse = 0.0;
  double mean_r2 = 0.0;
  double mean_actual_evals = 0.0;
  double mean_wall_ms = 0.0;
  std::size_t runs = 0;
};

class Pipeline {
 public:
  static constexpr const char* kStages[] = {"synth",          "ingest",         "build-meta",
                                            "entropy-report", "train-distance", "train-screener",
                                            "optimize",       "baseline",       "report"};

  explicit Pipeline(ExperimentConfig config, std::ostream* log = nullptr);
  ~Pipeline();

  const ExperimentConfig& config() const { return config_; }
  const HyperParamSchema& schema() const { return schema_; }
  std::filesystem::path path(const std::string& name) const { return out_ / name; }

  void synth();
  void ingest(const std::filesystem::path& records);
  // Returns the number of new base-learner evaluations.
  std::size_t build_meta();
  EntropyReport entropy_report();
  void train_distance();
  // Returns the pooled Spearman correlation on held-out meta tasks (NaN
  // when the holdout is empty).
  double train_screener();
  std::vector<RunRecord> optimize();
  std::vector<RunRecord> baseline();
  std::vector<ReportRow> report();

  std::vector<int> meta_task_ids() const;
  std::vector<int> test_task_ids() const;

  // Loaded lazily from the output directory.
  const LearnerTask& task(int task_id);
  const FitnessTable& table(int task_id);
  const std::vector<double>& features(int task_id);
  const std::vector<MetaSample>& meta_samples();
  DistanceNet& distance_net();
  ScreenerNet& screener_net();

  // K nearest meta-sample labels for a task.
  std::vector<Strategy> knn_seeds(int task_id);
  std::unique_ptr<LearnerFitness> fitness(int task_id);
  std::uint64_t training_seed(int task_id) const;
  std::uint64_t run_seed(int task_id, std::size_t repeat) const;

  // Runs one method on one test task and writes its history, log and result row.
  RunRecord run(const std::string& method, int task_id, std::size_t repeat);

 private:
  void require(const std::string& stage) const;
  void complete(const std::string& stage, const std::vector<std::filesystem::path>& artifacts);
  void start_fresh();
  std::vector<RunRecord> run_methods(const std::vector<std::string>& methods, const std::string& stage);
  void say(const std::string& line);

  ExperimentConfig config_;
  HyperParamSchema schema_;
  std::filesystem::path out_;
  std::ostream* log_;
  std::shared_ptr<FitnessCache> cache_;

  std::optional<TrafficGrid> grid_;
  std::map<int, std::shared_ptr<LearnerTask>> tasks_;
  std::map<int, FitnessTable> tables_;
  std::map<int, std::vector<double>> features_;
  std::optional<std::vector<MetaSample>> samples_;
  std::unique_ptr<DistanceNet> distance_;
  std::unique_ptr<ScreenerNet> screener_;
};

void write_run_records(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_run_records(std::istream& in);

// Mean test MSE, test R2, actual evaluations and wall time per method, in
// first-seen method order.
std::vector<ReportRow> summarize(const std::vector<RunRecord>& records);
void write_report(std::ostream& out, const std::vector<ReportRow>& rows);

}  // namespace metahpo
