#pragma once

// Grid-cell traffic series: ingestion, neighbourhood imputation, max-min
// normalization, sliding-window samples and a seeded synthetic generator.
//
// File formats (plain decimal text, comma separated, '#' starts a comment):
//   Format A (record stream):  interval_index, cell_id, load
//       interval_index is 0-based; an empty or "nan" load marks a gap, as does
//       any (interval, cell) pair that never appears.
//   Format B (series dump):    cell_id, row, col, v1, ..., vT
//   Imputation flags:          cell_id, interval_index, flag
//       flag 1 = neighbourhood mean, 2 = own-series mean fallback.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "metahpo/tensor.hpp"

namespace metahpo {

struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

enum class ImputeFlag : std::uint8_t { observed = 0, neighbourhood = 1, own_mean = 2 };

struct TrafficSeries {
  int cell_id = 0;
  GridPos pos;
  std::vector<double> loads;        // NaN marks a missing interval before imputation
  std::vector<ImputeFlag> flags;    // same length as loads
};

using TrafficGrid = std::vector<TrafficSeries>;

// Row-major id -> coordinate map: id 1 is (0, 0), id side+1 is (1, 0).
GridPos cell_position(int cell_id, std::size_t grid_side);

struct NormalizedSeries {
  int cell_id = 0;
  std::vector<double> values;  // all in [0, 1]
  double min = 0.0;
  double max = 0.0;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
};

// Sliding-window samples with stride 1. Row i of `inputs` holds the window
// starting at starts[i]; labels[i] is the value right after that window.
struct SampleSet {
  std::size_t window = 0;
  Matrix inputs;
  std::vector<double> labels;
  std::vector<std::size_t> starts;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

struct SplitRanges {
  IndexRange train;
  IndexRange validation;
  IndexRange test;
};

struct SampleSplit {
  SampleSet train;
  SampleSet validation;
  SampleSet test;
  SplitRanges ranges;
};

// Fills NaN loads with the mean of the available Moore-neighbourhood cells at
// the same interval (only originally observed neighbour values count). When
// no neighbour has a value, the series' own observed mean is used.
TrafficGrid impute_missing(TrafficGrid grid);

NormalizedSeries normalize(const TrafficSeries& series);

// Windows fully inside [range.begin, range.end): range.size() - n_s samples.
SampleSet windowize(std::span<const double> values, std::size_t n_s, IndexRange range);
SampleSet windowize(const NormalizedSeries& series, std::size_t n_s);

// Test = trailing `test_fraction` of the series; validation = trailing
// `validation_fraction` of what remains; train = the rest.
SplitRanges split_ranges(std::size_t length, double test_fraction, double validation_fraction);
SampleSplit make_split(const NormalizedSeries& series, const SplitRanges& ranges, std::size_t n_s);

struct SynthConfig {
  std::size_t daily_period = 144;
  std::size_t weekly_period = 1008;
  double daily_scale = 1.0;
  double weekly_scale = 1.0;
  double noise_scale = 1.0;
  double burst_scale = 1.0;
};

TrafficGrid synth_generate(std::size_t num_cells, std::size_t num_intervals, std::uint64_t seed,
                           const SynthConfig& config = {});

// Lag-k autocorrelation: mean product of the n - k overlapping centred pairs
// divided by the variance. 0 for constant input.
double autocorrelation(std::span<const double> values, std::size_t lag);

TrafficGrid read_records(std::istream& in, std::size_t grid_side);
void write_series(std::ostream& out, const TrafficGrid& grid);
TrafficGrid read_series(std::istream& in);
void write_impute_flags(std::ostream& out, const TrafficGrid& grid);

TrafficGrid load_records(const std::filesystem::path& path, std::size_t grid_side);
void save_series(const std::filesystem::path& path, const TrafficGrid& grid);
TrafficGrid load_series(const std::filesystem::path& path);

}  // namespace metahpo
