#pragma once

// Offline meta-knowledge: per-task fitness tables over the full strategy grid,
// meta-samples labelled with each task's grid-search optimum, and the
// training corpus for the screener.
//
// Fitness table file:
//   metahpo-fitness-table 1
//   task_id,kind,schema_hash
//   <task>,<kind>,<hash>
//   <gene names...>,mse,fitness
//   <gene values...>,<mse>,<fitness>        one row per evaluated strategy
// Rows may appear in any order while a build is in progress; a finished
// table is rewritten in grid order. Divergent strategies have mse "inf" and
// fitness 0.
//
// Meta-sample index:
//   metahpo-meta-samples 1
//   task_id,f1..fI,<gene names...>,label_fitness
//   <task>,<scaled features...>,<label gene values...>,<fitness>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metahpo/fitness.hpp"
#include "metahpo/schema.hpp"

namespace metahpo {

struct TableEntry {
  double mse = std::numeric_limits<double>::infinity();
  double fitness = 0.0;
  bool diverged() const { return fitness == 0.0; }
};

class FitnessTable {
 public:
  FitnessTable(int task_id, const HyperParamSchema& schema);

  int task_id() const { return task_id_; }
  ModelKind kind() const { return kind_; }
  const std::string& schema_hash() const { return hash_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t filled() const;
  bool complete() const { return filled() == entries_.size(); }

  bool has(std::size_t grid_index) const { return entries_.at(grid_index).has_value(); }
  const TableEntry& at(std::size_t grid_index) const;
  void set(std::size_t grid_index, TableEntry entry);

  // Grid index of the largest fitness; ties go to the lower index.
  // Throws AssemblyError if the table is incomplete.
  std::size_t best_index() const;

  void write(std::ostream& out, const HyperParamSchema& schema) const;
  static FitnessTable read(std::istream& in, const HyperParamSchema& schema);

 private:
  int task_id_;
  ModelKind kind_;
  std::string hash_;
  std::vector<std::optional<TableEntry>> entries_;
};

std::filesystem::path table_path(const std::filesystem::path& dir, int task_id);
void save_table(const std::filesystem::path& path, const FitnessTable& table,
                const HyperParamSchema& schema);
FitnessTable load_table(const std::filesystem::path& path, const HyperParamSchema& schema);

struct BuildOptions {
  std::size_t threads = 1;
  // Strategies evaluated (in parallel) between two appends to the file.
  std::size_t chunk = 8;
  // Stop after this many new evaluations, leaving a partial table on disk.
  std::size_t max_new_evaluations = std::numeric_limits<std::size_t>::max();
};

// Grid search with resume: entries already in `path` are kept, missing ones
// are evaluated in grid order and appended chunk by chunk. A completed table
// is rewritten in grid order. An existing file for a different schema or
// task is an error.
FitnessTable build_fitness_table(FitnessFunction& fitness, int task_id,
                                 const std::filesystem::path& path, const BuildOptions& options = {});

struct MetaSample {
  int task_id = 0;
  std::vector<double> features;
  Strategy label;
  double label_fitness = 0.0;
};

// One sample per table, labelled with its best strategy. `features` maps
// task id to scaled meta-features. Throws AssemblyError naming the task when
// a table is incomplete or has no features.
std::vector<MetaSample> assemble_meta_samples(std::span<const FitnessTable> tables,
                                              const std::map<int, std::vector<double>>& features,
                                              const HyperParamSchema& schema);

void write_meta_samples(std::ostream& out, std::span<const MetaSample> samples,
                        const HyperParamSchema& schema);
std::vector<MetaSample> read_meta_samples(std::istream& in, const HyperParamSchema& schema);

struct ScreenerCorpus {
  std::vector<int> task_ids;
  std::vector<std::size_t> grid_indices;
  Matrix features;  // rows x I
  Matrix genes;     // rows x G, encoded
  std::vector<double> fitness;
  std::vector<double> mse;

  std::size_t size() const { return fitness.size(); }
};

ScreenerCorpus screener_corpus(std::span<const FitnessTable> tables,
                               const std::map<int, std::vector<double>>& features,
                               const HyperParamSchema& schema);

void write_corpus(std::ostream& out, const ScreenerCorpus& corpus);

}  // namespace metahpo
