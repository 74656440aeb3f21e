#include "metahpo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "metahpo/errors.hpp"
#include "metahpo/parallel.hpp"
#include "metahpo/serialize.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- config ----------------------------------------------------------------

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d{
      {"data", "synth"},
      {"grid_side", "100"},
      {"cells", "auto"},
      {"intervals", "2016"},
      {"model", "mlp"},
      {"schema", "desk"},
      {"meta_tasks", "160"},
      {"test_tasks", "5"},
      {"k", "8"},
      {"features", "6"},
      {"bins", "5"},
      {"test_fraction", "0.1"},
      {"validation_fraction", "0.2"},
      {"train.epochs", "30"},
      {"train.batch", "64"},
      {"train.weight_decay", "0.01"},
      {"screener.preset", "desk"},
      {"screener.hidden", "auto"},
      {"screener.lr", "auto"},
      {"screener.batch", "auto"},
      {"screener.epochs", "auto"},
      {"screener.weight_decay", "auto"},
      {"screener.holdout", "0.2"},
      {"distance.hidden", "64"},
      {"distance.lr", "0.001"},
      {"distance.epochs", "2000"},
      {"distance.batch", "0"},
      {"aga.population", "10"},
      {"aga.offspring", "100"},
      {"aga.generations", "10"},
      {"aga.p_rem", "0.1"},
      {"aga.p_mut", "0.2"},
      {"aga.tau", "2"},
      {"aga.elite_rule", "text"},
      {"aga.max_evaluations", "none"},
      {"pso.particles", "10"},
      {"baselines", "gs,ss,ga,aga,ga_knn,pso,bo"},
      {"budget", "auto"},
      {"repeats", "1"},
      {"seed", "7"},
      {"threads", "1"},
      {"out", "runs"},
  };
  return d;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace

ExperimentConfig::ExperimentConfig() : entries_(defaults()) {}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw FormatError("expected key = value", number);
    c.set(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string ExperimentConfig::canonical() const {
  std::string text;
  for (const auto& [k, v] : entries_) {
    if (k == "out" || k == "threads") continue;
    text += k + " = " + v + "\n";
  }
  return text;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical()); }

std::size_t ExperimentConfig::size_value(const std::string& key) const {
  const std::int64_t v = parse_int(get(key));
  if (v < 0) throw ConfigError(key + " must not be negative");
  return static_cast<std::size_t>(v);
}

double ExperimentConfig::real_value(const std::string& key) const { return parse_double(get(key)); }

std::size_t ExperimentConfig::grid_side() const { return size_value("grid_side"); }
std::size_t ExperimentConfig::cells() const {
  return get("cells") == "auto" ? meta_tasks() + test_tasks() : size_value("cells");
}
std::size_t ExperimentConfig::intervals() const { return size_value("intervals"); }
ModelKind ExperimentConfig::model() const { return parse_model_kind(get("model")); }
HyperParamSchema ExperimentConfig::schema() const { return HyperParamSchema::preset(get("schema"), model()); }
std::size_t ExperimentConfig::meta_tasks() const { return size_value("meta_tasks"); }
std::size_t ExperimentConfig::test_tasks() const { return size_value("test_tasks"); }
std::size_t ExperimentConfig::k() const { return size_value("k"); }
std::size_t ExperimentConfig::features() const { return size_value("features"); }
std::size_t ExperimentConfig::bins() const { return size_value("bins"); }
double ExperimentConfig::test_fraction() const { return real_value("test_fraction"); }
double ExperimentConfig::validation_fraction() const { return real_value("validation_fraction"); }

TrainConfig ExperimentConfig::train() const {
  TrainConfig t;
  t.epochs = size_value("train.epochs");
  t.batch_size = size_value("train.batch");
  t.weight_decay = real_value("train.weight_decay");
  return t;
}

ScreenerConfig ExperimentConfig::screener() const {
  ScreenerConfig s = ScreenerConfig::preset(get("screener.preset"));
  if (get("screener.hidden") != "auto") s.hidden = size_value("screener.hidden");
  if (get("screener.lr") != "auto") s.learning_rate = real_value("screener.lr");
  if (get("screener.batch") != "auto") s.batch_size = size_value("screener.batch");
  if (get("screener.epochs") != "auto") s.epochs = size_value("screener.epochs");
  if (get("screener.weight_decay") != "auto") s.weight_decay = real_value("screener.weight_decay");
  return s;
}

double ExperimentConfig::screener_holdout() const { return real_value("screener.holdout"); }

DistanceConfig ExperimentConfig::distance() const {
  DistanceConfig d;
  d.hidden = size_value("distance.hidden");
  d.learning_rate = real_value("distance.lr");
  d.epochs = size_value("distance.epochs");
  d.batch_size = size_value("distance.batch");
  return d;
}

AgaConfig ExperimentConfig::aga() const {
  AgaConfig a;
  a.population = size_value("aga.population");
  a.offspring = size_value("aga.offspring");
  a.generations = size_value("aga.generations");
  a.p_rem = real_value("aga.p_rem");
  a.p_mut = real_value("aga.p_mut");
  a.tau = size_value("aga.tau");
  const std::string& rule = get("aga.elite_rule");
  if (rule == "text") {
    a.elite_rule = EliteRule::text;
  } else if (rule == "pseudocode") {
    a.elite_rule = EliteRule::pseudocode;
  } else {
    throw ConfigError("aga.elite_rule must be text or pseudocode");
  }
  if (get("aga.max_evaluations") != "none") a.max_evaluations = size_value("aga.max_evaluations");
  a.seed = seed();
  a.threads = threads();
  return a;
}

PsoConfig ExperimentConfig::pso() const {
  PsoConfig p;
  p.particles = size_value("pso.particles");
  return p;
}

std::vector<std::string> ExperimentConfig::baselines() const {
  std::vector<std::string> out;
  for (const std::string& m : split_fields(get("baselines"))) {
    const std::string name(trim(m));
    if (name.empty()) continue;
    const auto& known = method_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown method '" + name + "' in baselines");
    }
    out.push_back(name);
  }
  return out;
}

std::size_t ExperimentConfig::budget() const {
  const AgaConfig a = aga();
  std::size_t b = get("budget") == "auto" ? a.population + a.tau * a.population * a.generations
                                          : size_value("budget");
  return std::min(b, a.max_evaluations);
}

std::size_t ExperimentConfig::repeats() const { return size_value("repeats"); }
std::uint64_t ExperimentConfig::seed() const { return static_cast<std::uint64_t>(parse_int(get("seed"))); }
std::size_t ExperimentConfig::threads() const { return std::max<std::size_t>(size_value("threads"), 1); }

void ExperimentConfig::validate() const {
  (void)schema();
  (void)train();
  (void)screener();
  (void)distance();
  (void)pso();
  (void)baselines();
  aga().validate();
  if (data() != "synth" && !fs::exists(data())) throw ConfigError("data file " + data() + " does not exist");
  if (meta_tasks() < 2) throw ConfigError("meta_tasks must be at least 2");
  if (k() == 0 || k() > meta_tasks()) throw ConfigError("K must lie in [1, meta_tasks]");
  if (k() > aga().population) throw ConfigError("K must not exceed the population size M");
  if (features() == 0 || features() > kCharacteristicNames.size()) {
    throw ConfigError("features must lie in [1, " + std::to_string(kCharacteristicNames.size()) + "]");
  }
  if (bins() < 2) throw ConfigError("bins must be at least 2");
  if (cells() < meta_tasks() + test_tasks()) throw ConfigError("cells must cover meta_tasks + test_tasks");
  const double h = screener_holdout();
  if (h < 0.0 || h >= 1.0) throw ConfigError("screener.holdout must lie in [0, 1)");
  if (budget() == 0) throw ConfigError("budget must be positive");
}

// --- run records -----------------------------------------------------------

void write_run_records(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "method,task_id,repeat,seed,best_index,best_strategy,validation_mse,test_mse,test_r2,"
         "actual_evals,wall_ms\n";
  for (const RunRecord& r : records) {
    out << r.method << ',' << r.task_id << ',' << r.repeat << ',' << r.seed << ',' << r.best_index << ','
        << r.best_strategy << ',' << format_double(r.validation_mse) << ',' << format_double(r.test_mse)
        << ',' << format_double(r.test_r2) << ',' << r.actual_evals << ',' << format_double(r.wall_ms)
        << '\n';
  }
}

std::vector<RunRecord> read_run_records(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 || trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 11) throw FormatError("run record needs 11 fields", number);
    RunRecord r;
    r.method = f[0];
    r.task_id = static_cast<int>(parse_int(f[1], number));
    r.repeat = static_cast<std::size_t>(parse_int(f[2], number));
    r.seed = static_cast<std::uint64_t>(std::stoull(f[3]));
    r.best_index = static_cast<std::size_t>(parse_int(f[4], number));
    r.best_strategy = f[5];
    r.validation_mse = parse_double(f[6], number);
    r.test_mse = parse_double(f[7], number);
    r.test_r2 = parse_double(f[8], number);
    r.actual_evals = static_cast<std::size_t>(parse_int(f[9], number));
    r.wall_ms = parse_double(f[10], number);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReportRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<ReportRow> rows;
  for (const RunRecord& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& row) { return row.method == r.method; });
    if (it == rows.end()) {
      rows.push_back({r.method});
      it = rows.end() - 1;
    }
    it->mean_mse += r.test_mse;
    it->mean_r2 += r.test_r2;
    it->mean_actual_evals += static_cast<double>(r.actual_evals);
    it->mean_wall_ms += r.wall_ms;
    ++it->runs;
  }
  for (ReportRow& row : rows) {
    const double n = static_cast<double>(row.runs);
    row.mean_mse /= n;
    row.mean_r2 /= n;
    row.mean_actual_evals /= n;
    row.mean_wall_ms /= n;
  }
  return rows;
}

void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "method,mean_mse,mean_r2,mean_actual_evals,mean_wall_ms\n";
  for (const ReportRow& r : rows) {
    out << r.method << ',' << format_double(r.mean_mse) << ',' << format_double(r.mean_r2) << ','
        << format_double(r.mean_actual_evals) << ',' << format_double(r.mean_wall_ms) << '\n';
  }
}

// --- pipeline --------------------------------------------------------------

namespace {

json read_manifest(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

std::string relative_name(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

template <class Writer>
fs::path write_text(const fs::path& path, Writer&& writer) {
  std::ostringstream out;
  writer(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, out.str());
  return path;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, std::ostream* log)
    : config_(std::move(config)), schema_(config_.schema()), out_(config_.out()), log_(log),
      cache_(std::make_shared<FitnessCache>()) {
  config_.validate();
}

Pipeline::~Pipeline() = default;

void Pipeline::say(const std::string& line) {
  if (log_ != nullptr) *log_ << line << std::endl;
}

void Pipeline::start_fresh() {
  fs::create_directories(out_);
  json m;
  m["config_hash"] = config_.hash();
  m["config"] = config_.canonical();
  m["versions"] = {{"metahpo", kVersion},
                   {"fitness_table", 1},
                   {"meta_samples", 1},
                   {"meta_features", 1},
                   {"tensors", 1}};
  m["stages"] = json::object();
  write_file_atomic(path("manifest.json"), m.dump(2) + "\n");
  write_file_atomic(path("config.txt"), config_.canonical());
}

void Pipeline::require(const std::string& stage) const {
  const json m = read_manifest(out_ / "manifest.json");
  const bool data_stage = stage == "data";
  const std::string shown = data_stage ? "synth or ingest" : stage;
  if (m.empty()) throw DependencyError("stage '" + shown + "' has not been run in " + out_.string());
  if (m.value("config_hash", "") != config_.hash()) {
    throw DependencyError("config changed since stage '" + shown + "' ran; rerun from synth or ingest");
  }
  const json& stages = m["stages"];
  const bool done = data_stage ? (stages.contains("synth") || stages.contains("ingest")) : stages.contains(stage);
  if (!done) throw DependencyError("stage '" + shown + "' has not been run");
}

void Pipeline::complete(const std::string& stage, const std::vector<fs::path>& artifacts) {
  json m = read_manifest(path("manifest.json"));
  json list = json::array();
  for (const fs::path& p : artifacts) list.push_back(relative_name(p, out_));
  m["stages"][stage] = {{"completed", utc_now()}, {"artifacts", list}};
  write_file_atomic(path("manifest.json"), m.dump(2) + "\n");
  say("[" + stage + "] done, " + std::to_string(artifacts.size()) + " artifact(s)");
}

std::vector<int> Pipeline::meta_task_ids() const {
  std::vector<int> ids(config_.meta_tasks());
  std::iota(ids.begin(), ids.end(), 1);
  return ids;
}

std::vector<int> Pipeline::test_task_ids() const {
  std::vector<int> ids(config_.test_tasks());
  std::iota(ids.begin(), ids.end(), static_cast<int>(config_.meta_tasks()) + 1);
  return ids;
}

void Pipeline::synth() {
  start_fresh();
  grid_ = synth_generate(config_.cells(), config_.intervals(), config_.seed());
  const fs::path series = write_text(path("series.csv"), [&](std::ostream& o) { write_series(o, *grid_); });
  say("[synth] " + std::to_string(grid_->size()) + " cells x " + std::to_string(config_.intervals()) +
      " intervals");
  complete("synth", {path("config.txt"), series});
}

void Pipeline::ingest(const fs::path& records) {
  TrafficGrid raw = load_records(records, config_.grid_side());
  std::sort(raw.begin(), raw.end(), [](const TrafficSeries& a, const TrafficSeries& b) { return a.cell_id < b.cell_id; });
  start_fresh();
  grid_ = impute_missing(std::move(raw));
  // Tasks are numbered 1..n in cell-id order.
  for (std::size_t i = 0; i < grid_->size(); ++i) (*grid_)[i].cell_id = static_cast<int>(i + 1);
  const fs::path series = write_text(path("series.csv"), [&](std::ostream& o) { write_series(o, *grid_); });
  const fs::path flags = write_text(path("impute_flags.csv"), [&](std::ostream& o) { write_impute_flags(o, *grid_); });
  say("[ingest] " + std::to_string(grid_->size()) + " cells x " +
      std::to_string(grid_->empty() ? 0 : grid_->front().loads.size()) + " intervals");
  complete("ingest", {path("config.txt"), series, flags});
}

const LearnerTask& Pipeline::task(int task_id) {
  if (auto it = tasks_.find(task_id); it != tasks_.end()) return *it->second;
  if (!grid_) grid_ = load_series(path("series.csv"));
  for (const TrafficSeries& s : *grid_) {
    if (s.cell_id == task_id) {
      auto t = std::make_shared<LearnerTask>(make_task(s, config_.test_fraction(), config_.validation_fraction()));
      return *tasks_.emplace(task_id, std::move(t)).first->second;
    }
  }
  throw ConfigError("no series for task " + std::to_string(task_id));
}

std::uint64_t Pipeline::training_seed(int task_id) const {
  return split_seed(config_.seed(), 1'000'000 + static_cast<std::uint64_t>(task_id));
}

std::uint64_t Pipeline::run_seed(int task_id, std::size_t repeat) const {
  return split_seed(config_.seed(), 2'000'000 + static_cast<std::uint64_t>(task_id) * 1000 + repeat);
}

std::unique_ptr<LearnerFitness> Pipeline::fitness(int task_id) {
  task(task_id);
  return std::make_unique<LearnerFitness>(schema_, tasks_.at(task_id), config_.train(), training_seed(task_id),
                                          cache_);
}

std::size_t Pipeline::build_meta() {
  require("data");
  if (!grid_) grid_ = load_series(path("series.csv"));
  if (grid_->size() < config_.meta_tasks() + config_.test_tasks()) {
    throw ConfigError(std::to_string(grid_->size()) + " cells cannot cover meta_tasks + test_tasks");
  }
  const fs::path dir = path("tables");
  BuildOptions options;
  options.threads = config_.threads();
  options.chunk = std::max<std::size_t>(8, config_.threads());
  std::vector<int> ids = meta_task_ids();
  for (int id : test_task_ids()) ids.push_back(id);

  std::vector<fs::path> artifacts;
  std::size_t fresh = 0;
  for (int id : ids) {
    auto f = fitness(id);
    tables_.erase(id);
    tables_.emplace(id, build_fitness_table(*f, id, table_path(dir, id), options));
    fresh += f->evaluations();
    artifacts.push_back(table_path(dir, id));
  }
  say("[build-meta] " + std::to_string(ids.size()) + " tables of " + std::to_string(schema_.grid().size()) +
      " strategies, " + std::to_string(fresh) + " new evaluations");

  artifacts.push_back(write_text(path("characteristics.csv"), [&](std::ostream& o) {
    o << "task_id";
    for (auto name : kCharacteristicNames) o << ',' << name;
    o << '\n';
    for (int id : ids) {
      const LearnerTask& t = task(id);
      const std::span<const double> fit(t.series.values.data(), t.ranges.validation.end);
      const CharacteristicVector c = characteristics(fit);
      o << id;
      for (double v : c.values) o << ',' << format_double(v);
      o << '\n';
    }
  }));
  complete("build-meta", artifacts);
  return fresh;
}

const FitnessTable& Pipeline::table(int task_id) {
  if (auto it = tables_.find(task_id); it != tables_.end()) return it->second;
  return tables_.emplace(task_id, load_table(table_path(path("tables"), task_id), schema_)).first->second;
}

namespace {

std::map<int, CharacteristicVector> read_characteristics(const fs::path& file) {
  std::map<int, CharacteristicVector> out;
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 || trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != kCharacteristicNames.size() + 1) throw FormatError("bad characteristics row", number);
    CharacteristicVector c;
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = parse_double(f[i + 1], number);
    out[static_cast<int>(parse_int(f[0], number))] = c;
  }
  return out;
}

}  // namespace

EntropyReport Pipeline::entropy_report() {
  require("build-meta");
  const auto chars = read_characteristics(path("characteristics.csv"));
  const std::vector<int> meta = meta_task_ids();

  std::vector<std::string> gene_names;
  for (const Gene& g : schema_.genes()) gene_names.push_back(g.name);
  const std::vector<std::string> char_names(kCharacteristicNames.begin(), kCharacteristicNames.end());
  std::vector<std::vector<double>> optimal, feats;
  std::vector<CharacteristicVector> store;
  std::vector<FitnessTable> meta_tables;
  for (int id : meta) {
    const FitnessTable& t = table(id);
    meta_tables.push_back(t);
    optimal.push_back(schema_.values(schema_.grid()[t.best_index()]));
    const CharacteristicVector& c = chars.at(id);
    feats.emplace_back(c.values.begin(), c.values.end());
    store.push_back(c);
  }
  const EntropyReport report = metahpo::entropy_report(gene_names, optimal, char_names, feats, config_.bins());
  MetaFeatureSpec spec = select_meta_features(report, config_.features());
  spec.fit_ranges(store);

  features_.clear();
  for (const auto& [id, c] : chars) features_[id] = spec.scale(c);
  std::map<int, std::vector<double>> meta_features;
  for (int id : meta) meta_features[id] = features_.at(id);
  samples_ = assemble_meta_samples(meta_tables, meta_features, schema_);
  const ScreenerCorpus corpus = screener_corpus(meta_tables, meta_features, schema_);

  std::string chosen;
  for (const auto& n : spec.names) chosen += (chosen.empty() ? "" : ", ") + n;
  say("[entropy-report] selected " + chosen);

  std::vector<fs::path> artifacts;
  artifacts.push_back(write_text(path("entropy_report.csv"), [&](std::ostream& o) { report.write(o); }));
  artifacts.push_back(write_text(path("meta_features.txt"), [&](std::ostream& o) { spec.write(o); }));
  artifacts.push_back(write_text(path("task_features.csv"), [&](std::ostream& o) {
    o << "task_id";
    for (const auto& n : spec.names) o << ',' << n;
    o << '\n';
    for (const auto& [id, f] : features_) {
      o << id;
      for (double v : f) o << ',' << format_double(v);
      o << '\n';
    }
  }));
  artifacts.push_back(write_text(path("meta_samples.csv"), [&](std::ostream& o) { write_meta_samples(o, *samples_, schema_); }));
  artifacts.push_back(write_text(path("screener_corpus.csv"), [&](std::ostream& o) { write_corpus(o, corpus); }));
  complete("entropy-report", artifacts);
  return report;
}

const std::vector<double>& Pipeline::features(int task_id) {
  if (features_.empty()) {
    std::istringstream in(read_file(path("task_features.csv")));
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (number == 1 || trim(line).empty()) continue;
      const auto f = split_fields(line);
      std::vector<double> v;
      for (std::size_t i = 1; i < f.size(); ++i) v.push_back(parse_double(f[i], number));
      features_[static_cast<int>(parse_int(f[0], number))] = std::move(v);
    }
  }
  auto it = features_.find(task_id);
  if (it == features_.end()) throw AssemblyError("no meta-features for task " + std::to_string(task_id));
  return it->second;
}

const std::vector<MetaSample>& Pipeline::meta_samples() {
  if (!samples_) {
    std::istringstream in(read_file(path("meta_samples.csv")));
    samples_ = read_meta_samples(in, schema_);
  }
  return *samples_;
}

void Pipeline::train_distance() {
  require("entropy-report");
  std::vector<FitnessTable> meta_tables;
  for (int id : meta_task_ids()) meta_tables.push_back(table(id));
  const PairCorpus corpus = build_pair_corpus(meta_tables, meta_samples(), schema_);
  DistanceConfig cfg = config_.distance();
  cfg.seed = split_seed(config_.seed(), 102);
  distance_ = std::make_unique<DistanceNet>(config_.features(), cfg.hidden, split_seed(config_.seed(), 101));
  const auto curve = train_distance_net(*distance_, corpus, cfg);
  say("[train-distance] " + std::to_string(corpus.size()) + " pairs, final loss " + format_double(curve.back()));

  std::vector<fs::path> artifacts;
  save_params(path("distance.params"), distance_->params());
  artifacts.push_back(path("distance.params"));
  artifacts.push_back(write_text(path("distance_loss.csv"), [&](std::ostream& o) { write_loss_curve(o, curve); }));
  artifacts.push_back(write_text(path("pairs.csv"), [&](std::ostream& o) {
    o << "source_task,query_task,rd,target\n";
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      o << corpus.pairs[i].source << ',' << corpus.pairs[i].query << ',' << format_double(corpus.pairs[i].rd)
        << ',' << format_double(corpus.targets[i]) << '\n';
    }
  }));
  artifacts.push_back(write_text(path("retrievals.csv"), [&](std::ostream& o) {
    bool header = true;
    for (int id : test_task_ids()) {
      write_retrievals(o, id, nearest(*distance_, meta_samples(), features(id), config_.k()), header);
      header = false;
    }
  }));
  complete("train-distance", artifacts);
}

DistanceNet& Pipeline::distance_net() {
  if (!distance_) {
    require("train-distance");
    distance_ = std::make_unique<DistanceNet>(config_.features(), config_.distance().hidden, 0);
    load_params(path("distance.params"), distance_->params());
  }
  return *distance_;
}

double Pipeline::train_screener() {
  require("entropy-report");
  std::vector<FitnessTable> meta_tables;
  std::map<int, std::vector<double>> meta_features;
  for (int id : meta_task_ids()) {
    meta_tables.push_back(table(id));
    meta_features[id] = features(id);
  }
  const ScreenerCorpus corpus = screener_corpus(meta_tables, meta_features, schema_);
  const TargetTransform transform = TargetTransform::fit(corpus.fitness);
  ScreenerConfig cfg = config_.screener();
  cfg.seed = split_seed(config_.seed(), 302);
  say("[train-screener] preset=" + config_.get("screener.preset") + " lr=" + format_double(cfg.learning_rate) +
      " batch=" + std::to_string(cfg.batch_size) + " epochs=" + std::to_string(cfg.epochs) +
      " hidden=" + std::to_string(cfg.hidden));

  auto data_for = [&](const std::set<int>& tasks) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (tasks.contains(corpus.task_ids[i])) rows.push_back(i);
    ScreenerData d{Matrix(rows.size(), corpus.features.cols()), Matrix(rows.size(), corpus.genes.cols()), {}};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      d.features.set_rows(r, corpus.features.slice_rows(rows[r], 1));
      d.genes.set_rows(r, corpus.genes.slice_rows(rows[r], 1));
      d.targets.push_back(transform.apply(corpus.fitness[rows[r]]));
    }
    return std::pair(rows, d);
  };

  // Held-out diagnostic: a net trained without some meta tasks ranks their rows.
  std::vector<int> ids = meta_task_ids();
  Rng rng(split_seed(config_.seed(), 201));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto held_count = std::min(
      ids.size() - 1, static_cast<std::size_t>(std::llround(config_.screener_holdout() * static_cast<double>(ids.size()))));
  const std::set<int> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(held_count));
  const std::set<int> kept(ids.begin() + static_cast<std::ptrdiff_t>(held_count), ids.end());
  double rho = std::numeric_limits<double>::quiet_NaN();
  std::vector<fs::path> artifacts;
  if (!held.empty()) {
    ScreenerNet probe(config_.features(), schema_.gene_count(), cfg.hidden, split_seed(config_.seed(), 301));
    metahpo::train_screener(probe, data_for(kept).second, cfg);
    const auto [rows, held_data] = data_for(held);
    const auto predicted = predict_scores(probe, held_data.features, held_data.genes);
    std::vector<double> actual;
    for (std::size_t r : rows) actual.push_back(corpus.fitness[r]);
    rho = spearman(actual, predicted);
    artifacts.push_back(write_text(path("screener_holdout.csv"), [&](std::ostream& o) {
      o << "task_id,grid_index,fitness,predicted\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        o << corpus.task_ids[rows[i]] << ',' << corpus.grid_indices[rows[i]] << ',' << format_double(actual[i])
          << ',' << format_double(predicted[i]) << '\n';
      }
    }));
    say("[train-screener] held-out tasks " + std::to_string(held.size()) + ", spearman " + format_double(rho));
  }

  screener_ = std::make_unique<ScreenerNet>(config_.features(), schema_.gene_count(), cfg.hidden,
                                            split_seed(config_.seed(), 301));
  const auto curve = metahpo::train_screener(*screener_, data_for(std::set<int>(ids.begin(), ids.end())).second, cfg);
  save_params(path("screener.params"), screener_->params());
  artifacts.push_back(path("screener.params"));
  artifacts.push_back(write_text(path("screener_loss.csv"), [&](std::ostream& o) { write_loss_curve(o, curve); }));
  artifacts.push_back(write_text(path("screener_config.txt"), [&](std::ostream& o) {
    o << "preset=" << config_.get("screener.preset") << "\nhidden=" << cfg.hidden
      << "\nlr=" << format_double(cfg.learning_rate) << "\nbatch=" << cfg.batch_size << "\nepochs=" << cfg.epochs
      << "\nweight_decay=" << format_double(cfg.weight_decay) << "\nholdout_tasks=" << held.size()
      << "\nholdout_spearman=" << format_double(rho) << "\nfinal_loss=" << format_double(curve.back()) << '\n';
  }));
  complete("train-screener", artifacts);
  return rho;
}

ScreenerNet& Pipeline::screener_net() {
  if (!screener_) {
    require("train-screener");
    screener_ = std::make_unique<ScreenerNet>(config_.features(), schema_.gene_count(), config_.screener().hidden, 0);
    load_params(path("screener.params"), screener_->params());
  }
  return *screener_;
}

std::vector<Strategy> Pipeline::knn_seeds(int task_id) {
  std::vector<Strategy> seeds;
  for (const Neighbor& n : nearest(distance_net(), meta_samples(), features(task_id), config_.k())) {
    seeds.push_back(n.sample.label);
  }
  return seeds;
}

RunRecord Pipeline::run(const std::string& method, int task_id, std::size_t repeat) {
  auto f = fitness(task_id);
  MethodContext ctx;
  ctx.aga = config_.aga();
  ctx.aga.seed = run_seed(task_id, repeat);
  ctx.pso = config_.pso();
  ctx.budget = config_.budget();
  std::unique_ptr<GrnSurrogate> surrogate;
  if (method == "algorithm1" || method == "ga_knn") ctx.seeds = knn_seeds(task_id);
  if (method == "algorithm1" || method == "aga") {
    surrogate = std::make_unique<GrnSurrogate>(screener_net(), schema_, features(task_id));
    ctx.surrogate = surrogate.get();
  }
  const OptimizationResult result = run_method(method, *f, ctx);

  const std::string stem = method + "_task" + std::to_string(task_id) + "_rep" + std::to_string(repeat);
  write_text(path("runs/" + stem + ".csv"), [&](std::ostream& o) { write_history(o, result); });
  write_text(path("runs/" + stem + ".log"), [&](std::ostream& o) {
    for (const GenerationLog& g : result.history) {
      o << "generation " << g.generation << " best_fitness " << format_double(g.best_fitness) << " mean_fitness "
        << format_double(g.mean_fitness) << " actual_evals " << g.actual_evals_cum << " candidates "
        << g.candidates << " evaluated " << g.evaluated << '\n';
    }
    o << "best " << schema_.describe(result.best) << " validation_mse "
      << format_double(result.best_record.validation_mse) << " evaluations " << result.evaluations << '\n';
  });

  RunRecord r;
  r.method = method;
  r.task_id = task_id;
  r.repeat = repeat;
  r.seed = ctx.aga.seed;
  r.best_index = schema_.grid_index(result.best);
  r.best_strategy = schema_.describe(result.best);
  r.validation_mse = result.best_record.validation_mse;
  r.test_mse = result.best_record.test_mse;
  r.test_r2 = result.best_record.test_r2;
  r.actual_evals = result.evaluations;
  r.wall_ms = result.wall_ms;
  return r;
}

std::vector<RunRecord> Pipeline::run_methods(const std::vector<std::string>& methods, const std::string& stage) {
  std::vector<RunRecord> all;
  std::vector<fs::path> artifacts;
  for (const std::string& m : methods) {
    std::vector<RunRecord> records;
    for (int id : test_task_ids()) {
      for (std::size_t rep = 0; rep < config_.repeats(); ++rep) {
        records.push_back(run(m, id, rep));
        const std::string stem = m + "_task" + std::to_string(id) + "_rep" + std::to_string(rep);
        artifacts.push_back(path("runs/" + stem + ".csv"));
        artifacts.push_back(path("runs/" + stem + ".log"));
      }
    }
    artifacts.push_back(write_text(path("results/" + m + ".csv"), [&](std::ostream& o) { write_run_records(o, records); }));
    say("[" + stage + "] " + m + ": " + std::to_string(records.size()) + " run(s)");
    all.insert(all.end(), records.begin(), records.end());
  }
  complete(stage, artifacts);
  return all;
}

std::vector<RunRecord> Pipeline::optimize() {
  require("train-distance");
  require("train-screener");
  return run_methods({"algorithm1"}, "optimize");
}

std::vector<RunRecord> Pipeline::baseline() {
  require("data");
  const auto methods = config_.baselines();
  for (const std::string& m : methods) {
    if (m == "algorithm1" || m == "ga_knn") require("train-distance");
    if (m == "algorithm1" || m == "aga") require("train-screener");
  }
  return run_methods(methods, "baseline");
}

std::vector<ReportRow> Pipeline::report() {
  require("data");
  std::vector<std::string> methods{"algorithm1"};
  for (const std::string& m : config_.baselines())
    if (m != "algorithm1") methods.push_back(m);
  std::vector<RunRecord> records;
  for (const std::string& m : methods) {
    const fs::path file = path("results/" + m + ".csv");
    if (!fs::exists(file)) continue;
    std::istringstream in(read_file(file));
    const auto rows = read_run_records(in);
    records.insert(records.end(), rows.begin(), rows.end());
  }
  if (records.empty()) throw DependencyError("stage 'optimize' or 'baseline' has not been run");
  const auto rows = summarize(records);

  std::vector<fs::path> artifacts;
  artifacts.push_back(write_text(path("report.csv"), [&](std::ostream& o) { write_report(o, rows); }));
  artifacts.push_back(write_text(path("report.txt"), [&](std::ostream& o) {
    o << "Test tasks: " << config_.test_tasks() << ", repeats: " << config_.repeats() << ", grid: "
      << schema_.grid().size() << " strategies (" << to_string(schema_.kind()) << ")\n\n";
    o << std::left << std::setw(12) << "method" << std::right << std::setw(14) << "test MSE" << std::setw(10)
      << "R2 %" << std::setw(12) << "evals" << std::setw(12) << "wall ms" << '\n';
    for (const ReportRow& r : rows) {
      o << std::left << std::setw(12) << r.method << std::right << std::setw(14) << std::setprecision(6)
        << r.mean_mse << std::setw(10) << std::fixed << std::setprecision(2) << 100.0 * r.mean_r2 << std::setw(12)
        << std::setprecision(1) << r.mean_actual_evals << std::setw(12) << r.mean_wall_ms << std::defaultfloat
        << '\n';
    }
  }));
  complete("report", artifacts);
  return rows;
}

}  // namespace metahpo
