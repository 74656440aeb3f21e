#pragma once

// Intrinsic characteristics of a task's series, their conditional entropy
// against the grid-search-optimal hyper-parameters, and the selected,
// min-max scaled meta-feature vector.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metahpo/tensor.hpp"

namespace metahpo {

inline constexpr std::size_t kCharacteristicCount = 11;

// Fixed order of the characteristic set.
inline constexpr std::array<std::string_view, kCharacteristicCount> kCharacteristicNames{
    "mean",     "variance", "median",    "skewness",    "kurtosis",      "maximum",
    "minimum",  "acf_lag1", "acf_daily", "trend_slope", "coef_variation"};

std::size_t characteristic_index(std::string_view name);

struct CharacteristicVector {
  std::array<double, kCharacteristicCount> values{};
  double operator[](std::size_t i) const { return values[i]; }
  double get(std::string_view name) const { return values[characteristic_index(name)]; }
};

// Degenerate rules: a constant series has zero variance, skewness, (excess)
// kurtosis, autocorrelations and coefficient of variation. The trend slope is
// per unit of normalized time, i.e. over the whole series.
CharacteristicVector characteristics(std::span<const double> values, std::size_t daily_lag = 144);

// Equal-frequency bin of every value. Equal values always share a bin, so the
// assignment does not depend on input order.
std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins);

// Shannon entropy in bits of the empirical distribution of `values`.
double entropy_bits(std::span<const double> values);
// H(values | bin) in bits.
double conditional_entropy_bits(std::span<const double> values, std::span<const std::size_t> bin);

struct EntropyReport {
  std::vector<std::string> genes;
  std::vector<std::string> characteristics;
  std::vector<double> h_gene;  // per gene
  Matrix h_conditional;        // genes x characteristics
  std::size_t bins = 0;

  // Mean conditional entropy across genes for each characteristic.
  std::vector<double> mean_conditional() const;
  // Rows `gene,characteristic,H_gene,H_conditional`; marginal rows use "-"
  // as the characteristic and repeat H_gene.
  void write(std::ostream& out) const;
};

// optimal[t][g]: value of gene g in task t's optimal strategy.
// features[t][c]: characteristic c of task t.
EntropyReport entropy_report(const std::vector<std::string>& genes,
                             const std::vector<std::vector<double>>& optimal,
                             const std::vector<std::string>& characteristics,
                             const std::vector<std::vector<double>>& features, std::size_t bins);

struct MetaFeatureSpec {
  std::vector<std::string> names;
  std::vector<double> min;
  std::vector<double> max;

  std::size_t size() const { return names.size(); }
  // Per-feature ranges from the meta-store's characteristics.
  void fit_ranges(std::span<const CharacteristicVector> store);
  // Selected characteristics scaled to [0, 1] with clipping. A zero-width
  // range maps to 0.
  std::vector<double> scale(const CharacteristicVector& c) const;
  std::vector<double> unscale(std::span<const double> scaled) const;

  void write(std::ostream& out) const;
  static MetaFeatureSpec read(std::istream& in);
};

// Ranks characteristics by mean conditional entropy (ascending, ties by
// name) and keeps the first `count`. Ranges are left for fit_ranges().
MetaFeatureSpec select_meta_features(const EntropyReport& report, std::size_t count);

std::vector<double> meta_feature_vector(std::span<const double> series, const MetaFeatureSpec& spec,
                                        std::size_t daily_lag = 144);

}  // namespace metahpo
