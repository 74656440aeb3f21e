#include "metahpo/meta_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <istream>

#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"
#include "metahpo/traffic_data.hpp"

namespace metahpo {

std::size_t characteristic_index(std::string_view name) {
  for (std::size_t i = 0; i < kCharacteristicCount; ++i)
    if (kCharacteristicNames[i] == name) return i;
  throw ConfigError("unknown characteristic '" + std::string(name) + "'");
}

CharacteristicVector characteristics(std::span<const double> values, std::size_t daily_lag) {
  if (values.empty()) throw UsageError("characteristics of an empty series");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  double slope = 0.0;
  if (values.size() > 1) {
    const double tmean = 0.5;
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < values.size(); ++t) {
      const double x = static_cast<double>(t) / (n - 1.0) - tmean;
      num += x * (values[t] - mean);
      den += x * x;
    }
    slope = num / den;
  }

  CharacteristicVector c;
  const bool flat = sorted.front() == sorted.back();
  if (flat) {
    c.values.fill(0.0);
    c.values[0] = c.values[2] = c.values[5] = c.values[6] = sorted.front();
    return c;
  }
  c.values = {mean,
              m2,
              median,
              m3 / std::pow(m2, 1.5),
              m4 / (m2 * m2) - 3.0,
              sorted.back(),
              sorted.front(),
              autocorrelation(values, 1),
              autocorrelation(values, daily_lag),
              slope,
              mean == 0.0 ? 0.0 : std::sqrt(m2) / mean};
  return c;
}

std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins) {
  if (bins < 2) throw ConfigError("entropy binning needs at least 2 bins");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> out(values.size());
  const std::size_t n = values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto rank = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin());
    out[i] = std::min(bins - 1, rank * bins / n);
  }
  return out;
}

namespace {

double entropy_of_counts(const std::map<double, std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (const auto& [value, count] : counts) {
    const double p = static_cast<double>(count) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

double entropy_bits(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::map<double, std::size_t> counts;
  for (double v : values) ++counts[v];
  return entropy_of_counts(counts, values.size());
}

double conditional_entropy_bits(std::span<const double> values, std::span<const std::size_t> bin) {
  if (values.size() != bin.size()) throw ShapeError("conditional entropy: size mismatch");
  std::map<std::size_t, std::map<double, std::size_t>> groups;
  for (std::size_t i = 0; i < values.size(); ++i) ++groups[bin[i]][values[i]];
  double h = 0.0;
  for (const auto& [b, counts] : groups) {
    std::size_t size = 0;
    for (const auto& [v, c] : counts) size += c;
    h += static_cast<double>(size) / static_cast<double>(values.size()) * entropy_of_counts(counts, size);
  }
  return h;
}

std::vector<double> EntropyReport::mean_conditional() const {
  std::vector<double> out(characteristics.size(), 0.0);
  for (std::size_t c = 0; c < characteristics.size(); ++c) {
    for (std::size_t g = 0; g < genes.size(); ++g) out[c] += h_conditional(g, c);
    out[c] /= static_cast<double>(std::max<std::size_t>(genes.size(), 1));
  }
  return out;
}

void EntropyReport::write(std::ostream& out) const {
  out << "gene,characteristic,H_gene,H_conditional\n";
  for (std::size_t g = 0; g < genes.size(); ++g) {
    out << genes[g] << ",-," << format_double(h_gene[g]) << ',' << format_double(h_gene[g]) << '\n';
    for (std::size_t c = 0; c < characteristics.size(); ++c) {
      out << genes[g] << ',' << characteristics[c] << ',' << format_double(h_gene[g]) << ','
          << format_double(h_conditional(g, c)) << '\n';
    }
  }
}

EntropyReport entropy_report(const std::vector<std::string>& genes,
                             const std::vector<std::vector<double>>& optimal,
                             const std::vector<std::string>& characteristics,
                             const std::vector<std::vector<double>>& features, std::size_t bins) {
  if (bins < 2) throw ConfigError("entropy report needs at least 2 bins");
  if (optimal.size() < 2) throw ConfigError("entropy report needs at least 2 tasks");
  if (features.size() != optimal.size()) throw ShapeError("entropy report: task count mismatch");
  EntropyReport report;
  report.genes = genes;
  report.characteristics = characteristics;
  report.bins = bins;
  report.h_gene.resize(genes.size());
  report.h_conditional = Matrix(genes.size(), characteristics.size());

  const std::size_t tasks = optimal.size();
  std::vector<std::vector<std::size_t>> binned(characteristics.size());
  for (std::size_t c = 0; c < characteristics.size(); ++c) {
    std::vector<double> column(tasks);
    for (std::size_t t = 0; t < tasks; ++t) column[t] = features[t].at(c);
    binned[c] = equal_frequency_bins(column, bins);
  }
  for (std::size_t g = 0; g < genes.size(); ++g) {
    std::vector<double> column(tasks);
    for (std::size_t t = 0; t < tasks; ++t) column[t] = optimal[t].at(g);
    report.h_gene[g] = entropy_bits(column);
    for (std::size_t c = 0; c < characteristics.size(); ++c) {
      report.h_conditional(g, c) = conditional_entropy_bits(column, binned[c]);
    }
  }
  return report;
}

MetaFeatureSpec select_meta_features(const EntropyReport& report, std::size_t count) {
  if (count == 0 || count > report.characteristics.size()) {
    throw ConfigError("meta-feature count must lie in [1, " +
                      std::to_string(report.characteristics.size()) + "]");
  }
  const std::vector<double> mean = report.mean_conditional();
  std::vector<std::size_t> order(mean.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mean[a] != mean[b]) return mean[a] < mean[b];
    return report.characteristics[a] < report.characteristics[b];
  });
  MetaFeatureSpec spec;
  for (std::size_t i = 0; i < count; ++i) spec.names.push_back(report.characteristics[order[i]]);
  return spec;
}

void MetaFeatureSpec::fit_ranges(std::span<const CharacteristicVector> store) {
  if (store.empty()) throw UsageError("meta-feature ranges need a populated store");
  min.assign(names.size(), 0.0);
  max.assign(names.size(), 0.0);
  for (std::size_t f = 0; f < names.size(); ++f) {
    const std::size_t idx = characteristic_index(names[f]);
    min[f] = max[f] = store.front()[idx];
    for (const auto& c : store) {
      min[f] = std::min(min[f], c[idx]);
      max[f] = std::max(max[f], c[idx]);
    }
  }
}

std::vector<double> MetaFeatureSpec::scale(const CharacteristicVector& c) const {
  if (min.size() != names.size()) throw UsageError("meta-feature spec has no fitted ranges");
  std::vector<double> out(names.size());
  for (std::size_t f = 0; f < names.size(); ++f) {
    const double width = max[f] - min[f];
    const double v = width > 0.0 ? (c.get(names[f]) - min[f]) / width : 0.0;
    out[f] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

std::vector<double> MetaFeatureSpec::unscale(std::span<const double> scaled) const {
  if (scaled.size() != names.size()) throw ShapeError("unscale: feature count mismatch");
  std::vector<double> out(names.size());
  for (std::size_t f = 0; f < names.size(); ++f) out[f] = min[f] + scaled[f] * (max[f] - min[f]);
  return out;
}

void MetaFeatureSpec::write(std::ostream& out) const {
  out << "metahpo-metafeatures 1\n";
  for (std::size_t f = 0; f < names.size(); ++f) {
    out << names[f] << ',' << format_double(min.at(f)) << ',' << format_double(max.at(f)) << '\n';
  }
}

MetaFeatureSpec MetaFeatureSpec::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "metahpo-metafeatures 1") {
    throw FormatError("not a meta-feature spec", 1);
  }
  MetaFeatureSpec spec;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3) throw FormatError("expected 'name,min,max'", line_no);
    characteristic_index(fields[0]);
    spec.names.push_back(fields[0]);
    spec.min.push_back(parse_double(fields[1], line_no));
    spec.max.push_back(parse_double(fields[2], line_no));
  }
  return spec;
}

std::vector<double> meta_feature_vector(std::span<const double> series, const MetaFeatureSpec& spec,
                                        std::size_t daily_lag) {
  return spec.scale(characteristics(series, daily_lag));
}

}  // namespace metahpo
