#include "metahpo/meta_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "metahpo/errors.hpp"
#include "metahpo/screening_grn.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

namespace {

constexpr std::string_view kTableMagic = "metahpo-fitness-table 1";
constexpr std::string_view kSamplesMagic = "metahpo-meta-samples 1";

// Complete lines of a text file. A trailing line without a newline is a
// write that was cut short and is dropped.
std::vector<std::string> complete_lines(std::istream& in) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      lines.emplace_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return lines;
}

std::string gene_header(const HyperParamSchema& schema) {
  std::string out;
  for (const Gene& g : schema.genes()) out += (out.empty() ? "" : ",") + g.name;
  return out;
}

std::string table_row(const HyperParamSchema& schema, std::size_t index, const TableEntry& e) {
  std::string row;
  for (double v : schema.values(schema.grid()[index])) row += format_double(v) + ',';
  return row + format_double(e.mse) + ',' + format_double(e.fitness) + '\n';
}

}  // namespace

FitnessTable::FitnessTable(int task_id, const HyperParamSchema& schema)
    : task_id_(task_id), kind_(schema.kind()), hash_(schema.hash()), entries_(schema.grid_size()) {}

std::size_t FitnessTable::filled() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.has_value(); }));
}

const TableEntry& FitnessTable::at(std::size_t grid_index) const {
  const auto& e = entries_.at(grid_index);
  if (!e) throw AssemblyError("task " + std::to_string(task_id_) + " has no entry " + std::to_string(grid_index));
  return *e;
}

void FitnessTable::set(std::size_t grid_index, TableEntry entry) { entries_.at(grid_index) = entry; }

std::size_t FitnessTable::best_index() const {
  if (!complete()) {
    throw AssemblyError("fitness table of task " + std::to_string(task_id_) + " is incomplete (" +
                        std::to_string(filled()) + "/" + std::to_string(size()) + ")");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i)
    if (entries_[i]->fitness > entries_[best]->fitness) best = i;
  return best;
}

void FitnessTable::write(std::ostream& out, const HyperParamSchema& schema) const {
  if (schema.hash() != hash_) throw SchemaError("table was built for a different schema");
  out << kTableMagic << "\ntask_id,kind,schema_hash\n"
      << task_id_ << ',' << to_string(kind_) << ',' << hash_ << '\n'
      << gene_header(schema) << ",mse,fitness\n";
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i]) out << table_row(schema, i, *entries_[i]);
}

FitnessTable FitnessTable::read(std::istream& in, const HyperParamSchema& schema) {
  const auto lines = complete_lines(in);
  if (lines.size() < 4 || trim(lines[0]) != kTableMagic) throw FormatError("not a fitness table", 1);
  const auto meta = split_fields(lines[2]);
  if (meta.size() != 3) throw FormatError("expected 'task_id,kind,schema_hash'", 3);
  const int task = static_cast<int>(parse_int(meta[0], 3));
  if (parse_model_kind(meta[1]) != schema.kind() || meta[2] != schema.hash()) {
    throw SchemaError("fitness table of task " + meta[0] + " was built for a different schema");
  }
  FitnessTable table(task, schema);
  const std::size_t genes = schema.gene_count();
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != genes + 2) throw FormatError("wrong field count in table row", i + 1);
    std::vector<double> values(genes);
    for (std::size_t g = 0; g < genes; ++g) values[g] = parse_double(fields[g], i + 1);
    const Strategy s = schema.from_values(values);
    table.set(schema.grid_index(s),
              {parse_double(fields[genes], i + 1), parse_double(fields[genes + 1], i + 1)});
  }
  return table;
}

std::filesystem::path table_path(const std::filesystem::path& dir, int task_id) {
  return dir / ("task_" + std::to_string(task_id) + ".csv");
}

void save_table(const std::filesystem::path& path, const FitnessTable& table,
                const HyperParamSchema& schema) {
  std::ostringstream out;
  table.write(out, schema);
  write_file_atomic(path, out.str());
}

FitnessTable load_table(const std::filesystem::path& path, const HyperParamSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return FitnessTable::read(in, schema);
}

FitnessTable build_fitness_table(FitnessFunction& fitness, int task_id,
                                 const std::filesystem::path& path, const BuildOptions& options) {
  const HyperParamSchema& schema = fitness.schema();
  FitnessTable table(task_id, schema);
  if (std::filesystem::exists(path)) {
    table = load_table(path, schema);
    if (table.task_id() != task_id) {
      throw ConfigError(path.string() + " belongs to task " + std::to_string(table.task_id()));
    }
  } else {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_table(path, table, schema);
  }

  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (!table.has(i)) missing.push_back(i);
  const std::size_t todo = std::min(missing.size(), options.max_new_evaluations);
  const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);

  for (std::size_t start = 0; start < todo; start += chunk) {
    const std::size_t n = std::min(chunk, todo - start);
    std::vector<Strategy> batch;
    for (std::size_t k = 0; k < n; ++k) batch.push_back(schema.grid()[missing[start + k]]);
    const auto records = fitness.evaluate_batch(batch, options.threads);
    std::string rows;
    for (std::size_t k = 0; k < n; ++k) {
      const TableEntry e{records[k].validation_mse, records[k].fitness};
      table.set(missing[start + k], e);
      rows += table_row(schema, missing[start + k], e);
    }
    std::ofstream out(path, std::ios::app);
    out << rows;
    out.flush();
    if (!out) throw FormatError("cannot append to " + path.string(), 0);
  }
  if (table.complete() && !missing.empty()) save_table(path, table, schema);
  return table;
}

std::vector<MetaSample> assemble_meta_samples(std::span<const FitnessTable> tables,
                                              const std::map<int, std::vector<double>>& features,
                                              const HyperParamSchema& schema) {
  std::vector<MetaSample> samples;
  for (const FitnessTable& t : tables) {
    if (t.schema_hash() != schema.hash()) {
      throw AssemblyError("task " + std::to_string(t.task_id()) + " was built for a different schema");
    }
    const auto it = features.find(t.task_id());
    if (it == features.end()) {
      throw AssemblyError("task " + std::to_string(t.task_id()) + " has no meta-features");
    }
    const std::size_t best = t.best_index();
    samples.push_back({t.task_id(), it->second, schema.grid()[best], t.at(best).fitness});
  }
  return samples;
}

void write_meta_samples(std::ostream& out, std::span<const MetaSample> samples,
                        const HyperParamSchema& schema) {
  const std::size_t width = samples.empty() ? 0 : samples.front().features.size();
  out << kSamplesMagic << "\ntask_id";
  for (std::size_t f = 0; f < width; ++f) out << ",f" << f + 1;
  out << ',' << gene_header(schema) << ",label_fitness\n";
  for (const MetaSample& s : samples) {
    if (s.features.size() != width) throw ShapeError("meta-samples have different feature counts");
    out << s.task_id;
    for (double v : s.features) out << ',' << format_double(v);
    for (double v : schema.values(s.label)) out << ',' << format_double(v);
    out << ',' << format_double(s.label_fitness) << '\n';
  }
}

std::vector<MetaSample> read_meta_samples(std::istream& in, const HyperParamSchema& schema) {
  const auto lines = complete_lines(in);
  if (lines.size() < 2 || trim(lines[0]) != kSamplesMagic) throw FormatError("not a meta-sample index", 1);
  const std::size_t columns = split_fields(lines[1]).size();
  const std::size_t genes = schema.gene_count();
  if (columns < genes + 2) throw FormatError("meta-sample header is too short", 2);
  const std::size_t width = columns - genes - 2;
  std::vector<MetaSample> samples;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != columns) throw FormatError("wrong field count in meta-sample row", i + 1);
    MetaSample s;
    s.task_id = static_cast<int>(parse_int(fields[0], i + 1));
    for (std::size_t f = 0; f < width; ++f) s.features.push_back(parse_double(fields[1 + f], i + 1));
    std::vector<double> values(genes);
    for (std::size_t g = 0; g < genes; ++g) values[g] = parse_double(fields[1 + width + g], i + 1);
    s.label = schema.from_values(values);
    s.label_fitness = parse_double(fields.back(), i + 1);
    samples.push_back(std::move(s));
  }
  return samples;
}

ScreenerCorpus screener_corpus(std::span<const FitnessTable> tables,
                               const std::map<int, std::vector<double>>& features,
                               const HyperParamSchema& schema) {
  const GeneEncoder encoder(schema);
  ScreenerCorpus corpus;
  const std::size_t rows = tables.size() * schema.grid_size();
  std::size_t width = 0;
  if (!tables.empty()) {
    const auto it = features.find(tables.front().task_id());
    if (it == features.end()) throw AssemblyError("task " + std::to_string(tables.front().task_id()) + " has no meta-features");
    width = it->second.size();
  }
  corpus.features = Matrix(rows, width);
  corpus.genes = Matrix(rows, encoder.width());
  std::size_t r = 0;
  for (const FitnessTable& t : tables) {
    if (!t.complete()) {
      throw AssemblyError("fitness table of task " + std::to_string(t.task_id()) + " is incomplete");
    }
    const auto it = features.find(t.task_id());
    if (it == features.end() || it->second.size() != width) {
      throw AssemblyError("task " + std::to_string(t.task_id()) + " has no usable meta-features");
    }
    for (std::size_t i = 0; i < schema.grid_size(); ++i, ++r) {
      std::copy(it->second.begin(), it->second.end(), corpus.features.row(r).begin());
      const auto code = encoder.encode(schema.grid()[i]);
      std::copy(code.begin(), code.end(), corpus.genes.row(r).begin());
      corpus.task_ids.push_back(t.task_id());
      corpus.grid_indices.push_back(i);
      corpus.fitness.push_back(t.at(i).fitness);
      corpus.mse.push_back(t.at(i).mse);
    }
  }
  return corpus;
}

void write_corpus(std::ostream& out, const ScreenerCorpus& corpus) {
  out << "task_id,grid_index";
  for (std::size_t f = 0; f < corpus.features.cols(); ++f) out << ",f" << f + 1;
  for (std::size_t g = 0; g < corpus.genes.cols(); ++g) out << ",e" << g + 1;
  out << ",mse,fitness\n";
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    out << corpus.task_ids[r] << ',' << corpus.grid_indices[r];
    for (double v : corpus.features.row(r)) out << ',' << format_double(v);
    for (double v : corpus.genes.row(r)) out << ',' << format_double(v);
    out << ',' << format_double(corpus.mse[r]) << ',' << format_double(corpus.fitness[r]) << '\n';
  }
}

}  // namespace metahpo
