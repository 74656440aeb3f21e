#include "metahpo/schema.hpp"

#include <cmath>
#include <set>

#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::adnn: return "adnn";
    case ModelKind::mlp: return "mlp";
    case ModelKind::gru: return "gru";
    case ModelKind::lstm: return "lstm";
    case ModelKind::custom: return "custom";
  }
  return "custom";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "adnn") return ModelKind::adnn;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "gru") return ModelKind::gru;
  if (name == "lstm") return ModelKind::lstm;
  if (name == "custom") return ModelKind::custom;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

HyperParamSchema::HyperParamSchema(ModelKind kind, std::vector<Gene> genes)
    : kind_(kind), genes_(std::move(genes)) {
  if (genes_.empty()) throw SchemaError("schema needs at least one gene");
  std::set<std::string> names;
  std::size_t raw = 1;
  for (const Gene& g : genes_) {
    if (g.values.empty()) throw SchemaError("gene '" + g.name + "' has no values");
    if (g.values.size() > 65535) throw SchemaError("gene '" + g.name + "' is too large");
    if (!names.insert(g.name).second) throw SchemaError("duplicate gene '" + g.name + "'");
    if (g.log_scale) {
      for (double v : g.values)
        if (!(v > 0)) throw SchemaError("log-scale gene '" + g.name + "' needs positive values");
    }
    raw *= g.values.size();
  }
  if (kind_ == ModelKind::adnn) {
    for (auto name : {genes::window, genes::learning_rate, genes::layers, genes::heads,
                      genes::d_model}) {
      if (!has_gene(name)) throw SchemaError("adnn schema lacks gene '" + std::string(name) + "'");
    }
  } else if (kind_ != ModelKind::custom) {
    for (auto name : {genes::window, genes::learning_rate, genes::layers, genes::units}) {
      if (!has_gene(name)) {
        throw SchemaError(std::string(to_string(kind_)) + " schema lacks gene '" +
                          std::string(name) + "'");
      }
    }
  }

  raw_index_.assign(raw, -1);
  Strategy s;
  s.genes.assign(genes_.size(), 0);
  for (std::size_t pos = 0; pos < raw; ++pos) {
    std::size_t rest = pos;
    for (std::size_t g = genes_.size(); g-- > 0;) {
      s.genes[g] = static_cast<std::uint16_t>(rest % genes_[g].values.size());
      rest /= genes_[g].values.size();
    }
    if (compatible(s)) {
      raw_index_[pos] = static_cast<long>(grid_.size());
      grid_.push_back(s);
    }
  }
  if (grid_.empty()) throw SchemaError("schema has no valid strategies");
}

HyperParamSchema HyperParamSchema::full(ModelKind kind) {
  const Gene window{std::string(genes::window), {6, 12, 18}, false};
  const Gene rate{std::string(genes::learning_rate), {0.01, 0.001, 0.0001}, true};
  switch (kind) {
    case ModelKind::adnn:
      return HyperParamSchema(kind, {window, rate,
                                     {std::string(genes::layers), {1, 2, 3}, false},
                                     {std::string(genes::heads), {2, 4, 6, 8}, false},
                                     {std::string(genes::d_model), {8, 16, 32, 64, 128, 256, 512}, false}});
    case ModelKind::gru:
      return HyperParamSchema(kind, {window, rate, {std::string(genes::layers), {2, 3, 4}, false},
                                     {std::string(genes::units), {256, 512, 768}, false}});
    case ModelKind::lstm:
      return HyperParamSchema(kind, {window, rate, {std::string(genes::layers), {2, 3, 4}, false},
                                     {std::string(genes::units), {32, 64, 128, 256}, false}});
    case ModelKind::mlp:
      return HyperParamSchema(kind, {window, rate, {std::string(genes::layers), {2, 3, 4}, false},
                                     {std::string(genes::units), {128, 256, 512}, false}});
    case ModelKind::custom:
      break;
  }
  throw SchemaError("no table preset for custom schemas");
}

HyperParamSchema HyperParamSchema::desk(ModelKind kind) {
  const Gene rate{std::string(genes::learning_rate), {0.01, 0.001, 0.0001}, true};
  if (kind == ModelKind::adnn) {
    return HyperParamSchema(kind, {{std::string(genes::window), {6, 12}, false},
                                   {std::string(genes::learning_rate), {0.01, 0.001}, true},
                                   {std::string(genes::layers), {1, 2}, false},
                                   {std::string(genes::heads), {2, 4}, false},
                                   {std::string(genes::d_model), {8, 16}, false}});
  }
  if (kind == ModelKind::custom) throw SchemaError("no desk preset for custom schemas");
  return HyperParamSchema(kind, {{std::string(genes::window), {6, 12, 18}, false}, rate,
                                 {std::string(genes::layers), {2, 3}, false},
                                 {std::string(genes::units), {8, 16}, false}});
}

HyperParamSchema HyperParamSchema::preset(std::string_view name, ModelKind kind) {
  if (name == "full" || name == "paper") return full(kind);
  if (name == "desk") return desk(kind);
  throw ConfigError("unknown schema preset '" + std::string(name) + "'");
}

std::size_t HyperParamSchema::gene_index(std::string_view name) const {
  for (std::size_t g = 0; g < genes_.size(); ++g)
    if (genes_[g].name == name) return g;
  throw SchemaError("no gene named '" + std::string(name) + "'");
}

bool HyperParamSchema::has_gene(std::string_view name) const {
  for (const Gene& g : genes_)
    if (g.name == name) return true;
  return false;
}

double HyperParamSchema::value(const Strategy& s, std::size_t gene) const {
  return genes_.at(gene).values.at(s.genes.at(gene));
}

double HyperParamSchema::value(const Strategy& s, std::string_view gene) const {
  return value(s, gene_index(gene));
}

std::vector<double> HyperParamSchema::values(const Strategy& s) const {
  std::vector<double> out(genes_.size());
  for (std::size_t g = 0; g < genes_.size(); ++g) out[g] = value(s, g);
  return out;
}

Strategy HyperParamSchema::from_values(std::span<const double> values) const {
  if (values.size() != genes_.size()) throw SchemaError("strategy has the wrong gene count");
  Strategy s;
  s.genes.resize(genes_.size());
  for (std::size_t g = 0; g < genes_.size(); ++g) {
    const auto& allowed = genes_[g].values;
    std::size_t k = 0;
    while (k < allowed.size() && allowed[k] != values[g]) ++k;
    if (k == allowed.size()) {
      throw SchemaError("value " + format_double(values[g]) + " not allowed for gene '" +
                        genes_[g].name + "'");
    }
    s.genes[g] = static_cast<std::uint16_t>(k);
  }
  require_valid(s);
  return s;
}

bool HyperParamSchema::compatible(const Strategy& s) const {
  if (kind_ != ModelKind::adnn) return true;
  const auto heads = static_cast<long>(value(s, genes::heads));
  const auto width = static_cast<long>(value(s, genes::d_model));
  return heads > 0 && width % heads == 0;
}

bool HyperParamSchema::is_valid(const Strategy& s) const {
  if (s.genes.size() != genes_.size()) return false;
  for (std::size_t g = 0; g < genes_.size(); ++g)
    if (s.genes[g] >= genes_[g].values.size()) return false;
  return compatible(s);
}

void HyperParamSchema::require_valid(const Strategy& s) const {
  if (!is_valid(s)) throw SchemaError("strategy is not on the grid: " + describe(s));
}

std::size_t HyperParamSchema::raw_position(const Strategy& s) const {
  std::size_t pos = 0;
  for (std::size_t g = 0; g < genes_.size(); ++g) pos = pos * genes_[g].values.size() + s.genes[g];
  return pos;
}

std::size_t HyperParamSchema::grid_index(const Strategy& s) const {
  require_valid(s);
  return static_cast<std::size_t>(raw_index_[raw_position(s)]);
}

Strategy HyperParamSchema::random_strategy(Rng& rng) const {
  Strategy s;
  s.genes.resize(genes_.size());
  do {
    for (std::size_t g = 0; g < genes_.size(); ++g) {
      std::uniform_int_distribution<std::size_t> pick(0, genes_[g].values.size() - 1);
      s.genes[g] = static_cast<std::uint16_t>(pick(rng));
    }
  } while (!compatible(s));
  return s;
}

std::string HyperParamSchema::describe(const Strategy& s) const {
  std::string out;
  for (std::size_t g = 0; g < genes_.size() && g < s.genes.size(); ++g) {
    if (g) out += ';';
    out += genes_[g].name + "=";
    out += s.genes[g] < genes_[g].values.size() ? format_double(genes_[g].values[s.genes[g]])
                                                 : "?";
  }
  return out;
}

std::string HyperParamSchema::hash() const {
  std::string text(to_string(kind_));
  for (const Gene& g : genes_) {
    text += '|' + g.name + (g.log_scale ? "~log" : "") + ':';
    for (double v : g.values) text += format_double(v) + ',';
  }
  return fnv1a_hex(text);
}

}  // namespace metahpo
