#include "metahpo/traffic_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

GridPos cell_position(int cell_id, std::size_t grid_side) {
  if (cell_id < 1 || grid_side == 0) throw FormatError("cell ids start at 1");
  const auto index = static_cast<std::size_t>(cell_id - 1);
  return {index / grid_side, index % grid_side};
}

TrafficGrid impute_missing(TrafficGrid grid) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> by_pos;
  for (std::size_t i = 0; i < grid.size(); ++i) by_pos[{grid[i].pos.row, grid[i].pos.col}] = i;

  const TrafficGrid original = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    TrafficSeries& cell = grid[i];
    cell.flags.resize(cell.loads.size(), ImputeFlag::observed);
    std::vector<std::size_t> neighbours;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const auto r = static_cast<long long>(cell.pos.row) + dr;
        const auto c = static_cast<long long>(cell.pos.col) + dc;
        if (r < 0 || c < 0) continue;
        auto it = by_pos.find({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
        if (it != by_pos.end()) neighbours.push_back(it->second);
      }
    }
    double own_sum = 0.0;
    std::size_t own_count = 0;
    for (double v : original[i].loads) {
      if (!std::isnan(v)) {
        own_sum += v;
        ++own_count;
      }
    }
    const double own_mean = own_count ? own_sum / static_cast<double>(own_count) : 0.0;

    for (std::size_t t = 0; t < cell.loads.size(); ++t) {
      if (!std::isnan(cell.loads[t])) continue;
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t n : neighbours) {
        const auto& other = original[n].loads;
        if (t < other.size() && !std::isnan(other[t])) {
          sum += other[t];
          ++count;
        }
      }
      if (count) {
        cell.loads[t] = sum / static_cast<double>(count);
        cell.flags[t] = ImputeFlag::neighbourhood;
      } else {
        cell.loads[t] = own_mean;
        cell.flags[t] = ImputeFlag::own_mean;
      }
    }
  }
  return grid;
}

NormalizedSeries normalize(const TrafficSeries& series) {
  if (series.loads.empty()) throw std::invalid_argument("normalize: empty series");
  NormalizedSeries out;
  out.cell_id = series.cell_id;
  const auto [lo, hi] = std::minmax_element(series.loads.begin(), series.loads.end());
  out.min = *lo;
  out.max = *hi;
  const double span = out.max - out.min;
  out.values.resize(series.loads.size(), 0.0);
  if (span > 0.0) {
    for (std::size_t t = 0; t < series.loads.size(); ++t) {
      out.values[t] = (series.loads[t] - out.min) / span;
    }
  }
  return out;
}

SampleSet windowize(std::span<const double> values, std::size_t n_s, IndexRange range) {
  SampleSet set;
  set.window = n_s;
  range.end = std::min(range.end, values.size());
  if (n_s == 0 || range.end <= range.begin || range.size() <= n_s) {
    std::clog << "warning: range of " << (range.end > range.begin ? range.size() : 0)
              << " intervals is too short for window " << n_s << "; no samples\n";
    set.inputs = Matrix(0, n_s);
    return set;
  }
  const std::size_t count = range.size() - n_s;
  set.inputs = Matrix(count, n_s);
  set.labels.resize(count);
  set.starts.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = range.begin + i;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(start), n_s, set.inputs.row(i).begin());
    set.labels[i] = values[start + n_s];
    set.starts[i] = start;
  }
  return set;
}

SampleSet windowize(const NormalizedSeries& series, std::size_t n_s) {
  return windowize(series.values, n_s, {0, series.values.size()});
}

SplitRanges split_ranges(std::size_t length, double test_fraction, double validation_fraction) {
  if (test_fraction < 0 || test_fraction >= 1 || validation_fraction < 0 ||
      validation_fraction >= 1) {
    throw ConfigError("split fractions must lie in [0, 1)");
  }
  const auto test = static_cast<std::size_t>(std::floor(static_cast<double>(length) * test_fraction));
  const std::size_t fit = length - test;
  const auto validation =
      static_cast<std::size_t>(std::floor(static_cast<double>(fit) * validation_fraction));
  SplitRanges r;
  r.train = {0, fit - validation};
  r.validation = {fit - validation, fit};
  r.test = {fit, length};
  return r;
}

SampleSplit make_split(const NormalizedSeries& series, const SplitRanges& ranges, std::size_t n_s) {
  SampleSplit split;
  split.ranges = ranges;
  split.train = windowize(series.values, n_s, ranges.train);
  split.validation = windowize(series.values, n_s, ranges.validation);
  split.test = windowize(series.values, n_s, ranges.test);
  return split;
}

TrafficGrid synth_generate(std::size_t num_cells, std::size_t num_intervals, std::uint64_t seed,
                           const SynthConfig& config) {
  if (num_cells == 0 || num_intervals == 0) {
    throw ConfigError("synth_generate: counts must be positive");
  }
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(num_cells))));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  TrafficGrid grid(num_cells);
  for (std::size_t i = 0; i < num_cells; ++i) {
    TrafficSeries& cell = grid[i];
    cell.cell_id = static_cast<int>(i + 1);
    cell.pos = cell_position(cell.cell_id, side);

    const double base = between(20.0, 200.0);
    const double daily = between(0.05, 0.9) * base * config.daily_scale;
    const double daily_phase = between(0.0, two_pi);
    const double harmonic = between(0.0, 0.4) * daily;
    const double weekly = between(0.0, 0.35) * config.weekly_scale;
    const double weekly_phase = between(0.0, two_pi);
    const double ar = between(0.2, 0.97);
    const double noise = between(0.01, 0.35) * base * config.noise_scale;
    const double burst_rate = between(0.0, 0.01);
    const double burst_height = between(0.5, 2.5) * base * config.burst_scale;
    const double burst_decay = between(0.5, 0.9);

    cell.loads.resize(num_intervals);
    cell.flags.assign(num_intervals, ImputeFlag::observed);
    double ar_state = 0.0;
    double burst = 0.0;
    for (std::size_t t = 0; t < num_intervals; ++t) {
      const double td = static_cast<double>(t);
      const double day_angle = two_pi * td / static_cast<double>(config.daily_period) + daily_phase;
      const double week_angle =
          two_pi * td / static_cast<double>(config.weekly_period) + weekly_phase;
      ar_state = ar * ar_state + gauss(rng);
      const bool starts_burst = unit(rng) < burst_rate;
      burst = burst * burst_decay + (starts_burst ? burst_height : 0.0);
      double level = base + daily * std::sin(day_angle) + harmonic * std::sin(2.0 * day_angle);
      level *= 1.0 + weekly * std::sin(week_angle);
      level += noise * std::sqrt(1.0 - ar * ar) * ar_state + burst;
      cell.loads[t] = std::max(0.0, level);
    }
  }
  return grid;
}

double autocorrelation(std::span<const double> values, std::size_t lag) {
  const std::size_t n = values.size();
  if (lag >= n) return 0.0;
  if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
    return 0.0;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : values) denom += (v - mean) * (v - mean);
  if (denom <= 0.0) return 0.0;
  double num = 0.0;
  for (std::size_t t = 0; t + lag < n; ++t) num += (values[t] - mean) * (values[t + lag] - mean);
  // Mean lagged product over the overlapping pairs, relative to the variance.
  return (num / static_cast<double>(n - lag)) / (denom / static_cast<double>(n));
}

TrafficGrid read_records(std::istream& in, std::size_t grid_side) {
  struct Record {
    std::size_t interval;
    int cell;
    double load;
  };
  std::vector<Record> records;
  std::size_t max_interval = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (line_no == 1 && body.starts_with("interval")) continue;
    const auto fields = split_fields(body);
    if (fields.size() != 3) {
      throw FormatError("expected 'interval_index, cell_id, load'", line_no);
    }
    const auto interval = parse_int(fields[0], line_no);
    const auto cell = parse_int(fields[1], line_no);
    if (interval < 0 || cell < 1) throw FormatError("negative interval or cell id", line_no);
    double load = std::numeric_limits<double>::quiet_NaN();
    if (!fields[2].empty() && fields[2] != "nan" && fields[2] != "NaN") {
      load = parse_double(fields[2], line_no);
      if (load < 0) throw FormatError("negative traffic load", line_no);
    }
    records.push_back({static_cast<std::size_t>(interval), static_cast<int>(cell), load});
    max_interval = std::max(max_interval, static_cast<std::size_t>(interval));
  }
  std::map<int, std::size_t> index;
  TrafficGrid grid;
  for (const auto& r : records) {
    if (index.contains(r.cell)) continue;
    index[r.cell] = 0;
  }
  for (auto& [cell, slot] : index) {
    slot = grid.size();
    TrafficSeries s;
    s.cell_id = cell;
    s.pos = cell_position(cell, grid_side);
    s.loads.assign(records.empty() ? 0 : max_interval + 1,
                   std::numeric_limits<double>::quiet_NaN());
    s.flags.assign(s.loads.size(), ImputeFlag::observed);
    grid.push_back(std::move(s));
  }
  for (const auto& r : records) grid[index[r.cell]].loads[r.interval] = r.load;
  return grid;
}

void write_series(std::ostream& out, const TrafficGrid& grid) {
  for (const auto& cell : grid) {
    out << cell.cell_id << ',' << cell.pos.row << ',' << cell.pos.col;
    for (double v : cell.loads) out << ',' << format_double(v);
    out << '\n';
  }
}

TrafficGrid read_series(std::istream& in) {
  TrafficGrid grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_fields(body);
    if (fields.size() < 4) throw FormatError("expected 'cell_id, row, col, v1..vT'", line_no);
    TrafficSeries s;
    s.cell_id = static_cast<int>(parse_int(fields[0], line_no));
    s.pos = {static_cast<std::size_t>(parse_int(fields[1], line_no)),
             static_cast<std::size_t>(parse_int(fields[2], line_no))};
    for (std::size_t i = 3; i < fields.size(); ++i) s.loads.push_back(parse_double(fields[i], line_no));
    s.flags.assign(s.loads.size(), ImputeFlag::observed);
    if (!grid.empty() && grid.front().loads.size() != s.loads.size()) {
      throw FormatError("series lengths differ", line_no);
    }
    grid.push_back(std::move(s));
  }
  return grid;
}

void write_impute_flags(std::ostream& out, const TrafficGrid& grid) {
  for (const auto& cell : grid) {
    for (std::size_t t = 0; t < cell.flags.size(); ++t) {
      if (cell.flags[t] != ImputeFlag::observed) {
        out << cell.cell_id << ',' << t << ',' << static_cast<int>(cell.flags[t]) << '\n';
      }
    }
  }
}

TrafficGrid load_records(const std::filesystem::path& path, std::size_t grid_side) {
  std::istringstream in(read_file(path));
  return read_records(in, grid_side);
}

void save_series(const std::filesystem::path& path, const TrafficGrid& grid) {
  std::ostringstream out;
  write_series(out, grid);
  write_file_atomic(path, out.str());
}

TrafficGrid load_series(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return read_series(in);
}

}  // namespace metahpo
