#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/experiment.hpp"
#include "metahpo/text_io.hpp"

using namespace metahpo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const std::string& name) {
  std::istringstream in(
      "meta_tasks = 4\n"
      "test_tasks = 2\n"
      "intervals = 400   # enough for the daily lag\n"
      "k = 2\n"
      "features = 3\n"
      "bins = 2\n"
      "train.epochs = 2\n"
      "screener.epochs = 5\n"
      "screener.holdout = 0.25\n"
      "distance.epochs = 50\n"
      "aga.population = 4\n"
      "aga.offspring = 8\n"
      "aga.generations = 2\n"
      "aga.tau = 1\n"
      "baselines = gs,ss\n");
  ExperimentConfig c = ExperimentConfig::parse(in);
  const fs::path out = fs::temp_directory_path() / ("metahpo_exp_" + name);
  fs::remove_all(out);
  c.set("out", out.string());
  return c;
}

}  // namespace

TEST_CASE("config parsing, defaults and errors") {
  const ExperimentConfig d;
  CHECK(d.meta_tasks() == 160);
  CHECK(d.k() == 8);
  CHECK(d.aga().population == 10);
  CHECK(d.budget() == 210);
  CHECK(d.cells() == 165);

  ExperimentConfig c = tiny("parse");
  CHECK(c.meta_tasks() == 4);
  CHECK(c.budget() == 12);
  c.set("aga.max_evaluations", "9");
  CHECK(c.budget() == 9);
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
  std::istringstream bad("meta_tasks 4\n");
  CHECK_THROWS_AS(ExperimentConfig::parse(bad), FormatError);

  ExperimentConfig k = tiny("k");
  k.set("k", "5");
  CHECK_THROWS_AS(k.validate(), ConfigError);
  ExperimentConfig m = tiny("m");
  m.set("baselines", "gs,simplex");
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("config hash ignores out and threads") {
  ExperimentConfig a = tiny("hash_a"), b = tiny("hash_b");
  b.set("threads", "4");
  CHECK(a.hash() == b.hash());
  b.set("seed", "8");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("full-size screener preset") {
  ExperimentConfig c;
  c.set("screener.preset", "paper");
  const ScreenerConfig s = c.screener();
  CHECK(s.learning_rate == 0.001);
  CHECK(s.batch_size == 252);
  CHECK(s.epochs == 400);
  CHECK(s.hidden == 512);
}

TEST_CASE("synth twice gives byte-identical series") {
  Pipeline a(tiny("synth_a"));
  a.synth();
  Pipeline b(tiny("synth_b"));
  b.synth();
  CHECK(read_file(a.path("series.csv")) == read_file(b.path("series.csv")));
}

TEST_CASE("ingest: three rows, and a flagged gap") {
  ExperimentConfig c = tiny("ingest");
  c.set("grid_side", "2");
  fs::create_directories(c.out());
  const fs::path rec = c.out() / "records.csv";
  {
    std::ofstream f(rec);
    f << "0,1,5\n1,1,6\n2,1,7\n";
  }
  Pipeline p(c);
  p.ingest(rec);
  std::istringstream in(read_file(p.path("series.csv")));
  const TrafficGrid g = read_series(in);
  REQUIRE(g.size() == 1);
  CHECK(g[0].loads.size() == 3);

  {
    std::ofstream f(rec);
    f << "0,1,5\n1,1,\n2,1,7\n0,2,1\n1,2,3\n2,2,1\n";
  }
  Pipeline q(c);
  q.ingest(rec);
  const std::string flags = read_file(q.path("impute_flags.csv"));
  CHECK(flags.find("1,1,1") != std::string::npos);
  std::istringstream in2(read_file(q.path("series.csv")));
  CHECK(read_series(in2)[0].loads[1] == 3.0);
}

TEST_CASE("stages need their prerequisites") {
  Pipeline p(tiny("prereq"));
  CHECK_THROWS_WITH_AS(p.build_meta(), doctest::Contains("synth or ingest"), DependencyError);
  p.synth();
  CHECK_THROWS_WITH_AS(p.entropy_report(), doctest::Contains("build-meta"), DependencyError);
  CHECK_THROWS_WITH_AS(p.optimize(), doctest::Contains("train-distance"), DependencyError);
  CHECK_THROWS_AS(p.report(), DependencyError);

  ExperimentConfig changed = p.config();  // same out directory
  changed.set("seed", "99");
  Pipeline q(changed);
  CHECK_THROWS_WITH_AS(q.build_meta(), doctest::Contains("config changed"), DependencyError);
}

TEST_CASE("full tiny pipeline") {
  Pipeline p(tiny("full"));
  p.synth();
  const std::size_t grid = p.schema().grid().size();
  CHECK(p.build_meta() == 6 * grid);
  CHECK(p.build_meta() == 0);  // resume: nothing left to evaluate

  const EntropyReport report = p.entropy_report();
  CHECK(report.characteristics.size() == 11);
  CHECK(p.meta_samples().size() == 4);
  CHECK(p.features(5).size() == 3);
  p.train_distance();
  p.train_screener();
  CHECK(p.knn_seeds(5).size() == 2);

  const auto a1 = p.optimize();
  REQUIRE(a1.size() == 2);
  for (const RunRecord& r : a1) CHECK(r.actual_evals <= 12);
  const auto base = p.baseline();
  REQUIRE(base.size() == 4);
  // gs is exhaustive, so it is never worse than ss on validation.
  for (int id : p.test_task_ids()) {
    const RunRecord* gs = nullptr;
    const RunRecord* ss = nullptr;
    for (const RunRecord& r : base) {
      if (r.task_id == id) (r.method == "gs" ? gs : ss) = &r;
    }
    REQUIRE(gs != nullptr);
    REQUIRE(ss != nullptr);
    CHECK(gs->validation_mse <= ss->validation_mse);
    CHECK(gs->actual_evals == grid);
    CHECK(gs->best_index == p.table(id).best_index());
  }

  const auto rows = p.report();
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == "algorithm1");
  const std::string csv = read_file(p.path("report.csv"));
  CHECK(csv.rfind("method,mean_mse,mean_r2,mean_actual_evals,mean_wall_ms\n", 0) == 0);
  CHECK(rows[1].mean_actual_evals == static_cast<double>(grid));

  // The report is traceable to the result files.
  std::istringstream in(read_file(p.path("results/gs.csv")));
  const auto gs_rows = read_run_records(in);
  CHECK(summarize(gs_rows)[0].mean_mse == rows[1].mean_mse);

  // Plot data and run log describe the same trajectory.
  const std::string stem = "runs/algorithm1_task5_rep0";
  std::istringstream plot(read_file(p.path(stem + ".csv")));
  std::istringstream log(read_file(p.path(stem + ".log")));
  std::string pl, ll;
  std::getline(plot, pl);
  std::size_t generations = 0;
  while (std::getline(plot, pl)) {
    REQUIRE(std::getline(log, ll));
    const auto f = split_fields(pl);
    CHECK(ll.find("generation " + f[0] + " best_fitness " + f[1] + " mean_fitness " + f[2] + " actual_evals " + f[3]) == 0);
    ++generations;
  }
  CHECK(generations >= 1);

  // Every artifact is listed in the manifest.
  const std::string manifest = read_file(p.path("manifest.json"));
  for (const auto& entry : fs::recursive_directory_iterator(p.path(""))) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const std::string rel = fs::relative(entry.path(), p.path("")).generic_string();
    INFO(rel);
    CHECK(manifest.find("\"" + rel + "\"") != std::string::npos);
  }
}
