#pragma once

// Discrete hyper-parameter grids. A Strategy (chromosome) stores one value
// index per gene; the grid is every valid combination in lexicographic order
// of those indices (first gene most significant).

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metahpo/layers.hpp"

namespace metahpo {

enum class ModelKind { adnn, mlp, gru, lstm, custom };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

namespace genes {
inline constexpr std::string_view window = "n_s";
inline constexpr std::string_view learning_rate = "lr";
inline constexpr std::string_view layers = "layers";
inline constexpr std::string_view heads = "heads";
inline constexpr std::string_view d_model = "d_model";
inline constexpr std::string_view units = "units";
}  // namespace genes

struct Gene {
  std::string name;
  std::vector<double> values;
  bool log_scale = false;  // encoded on a log10 axis
};

struct Strategy {
  std::vector<std::uint16_t> genes;
  auto operator<=>(const Strategy&) const = default;
};

class HyperParamSchema {
 public:
  // Throws SchemaError on empty or duplicate genes. ADNN schemas drop every
  // (heads, d_model) pair where heads does not divide d_model.
  HyperParamSchema(ModelKind kind, std::vector<Gene> genes);

  // Full selection ranges used for the four learner families.
  static HyperParamSchema full(ModelKind kind);
  // Small grids that train in milliseconds; MLP/GRU/LSTM have 36 strategies.
  static HyperParamSchema desk(ModelKind kind);
  static HyperParamSchema preset(std::string_view name, ModelKind kind);

  ModelKind kind() const noexcept { return kind_; }
  const std::vector<Gene>& genes() const noexcept { return genes_; }
  std::size_t gene_count() const noexcept { return genes_.size(); }
  std::size_t gene_index(std::string_view name) const;
  bool has_gene(std::string_view name) const;

  double value(const Strategy& s, std::size_t gene) const;
  double value(const Strategy& s, std::string_view gene) const;
  std::vector<double> values(const Strategy& s) const;
  // Exact value match per gene; throws SchemaError if a value is not on the grid.
  Strategy from_values(std::span<const double> values) const;

  bool is_valid(const Strategy& s) const;
  void require_valid(const Strategy& s) const;

  const std::vector<Strategy>& grid() const noexcept { return grid_; }
  std::size_t grid_size() const noexcept { return grid_.size(); }
  // Product of the gene cardinalities, before compatibility filtering.
  std::size_t raw_grid_size() const noexcept { return raw_index_.size(); }
  std::size_t grid_index(const Strategy& s) const;

  Strategy random_strategy(Rng& rng) const;
  std::string describe(const Strategy& s) const;
  // Stable fingerprint of kind + genes + values; changes invalidate stores.
  std::string hash() const;

 private:
  std::size_t raw_position(const Strategy& s) const;
  bool compatible(const Strategy& s) const;

  ModelKind kind_;
  std::vector<Gene> genes_;
  std::vector<Strategy> grid_;
  std::vector<long> raw_index_;  // raw position -> grid index, -1 if filtered
};

}  // namespace metahpo
