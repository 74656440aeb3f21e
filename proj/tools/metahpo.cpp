// metahpo: command-line driver for the meta-learning HPO pipeline.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metahpo/errors.hpp"
#include "metahpo/experiment.hpp"
#include "metahpo/text_io.hpp"

using namespace metahpo;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string seed;
  std::string threads;
  std::vector<std::string> overrides;
  std::string input;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig() : ExperimentConfig::load(o.config);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
  }
  if (!o.seed.empty()) c.set("seed", o.seed);
  if (!o.out.empty()) c.set("out", o.out);
  if (!o.threads.empty()) c.set("threads", o.threads);
  return c;
}

void print_records(const std::vector<RunRecord>& records) {
  for (const RunRecord& r : records) {
    std::cout << r.method << " task " << r.task_id << " rep " << r.repeat << ": " << r.best_strategy
              << " val_mse " << format_double(r.validation_mse) << " evals " << r.actual_evals << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-assisted meta-learning hyper-parameter search for traffic forecasters"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--threads", o.threads, "worker threads");
  app.add_option("--set", o.overrides, "override a config key (key=value), repeatable");

  auto* synth = app.add_subcommand("synth", "generate synthetic cell series");
  auto* ingest = app.add_subcommand("ingest", "read interval,cell,load records and impute gaps");
  ingest->add_option("input", o.input, "record file")->required()->check(CLI::ExistingFile);
  auto* build = app.add_subcommand("build-meta", "grid-search fitness tables (resumable)");
  auto* entropy = app.add_subcommand("entropy-report", "entropy ranking, meta-feature selection, meta-samples");
  auto* distance = app.add_subcommand("train-distance", "train the task distance net");
  auto* screener = app.add_subcommand("train-screener", "train the fitness screener");
  auto* optimize = app.add_subcommand("optimize", "run the screened KNN-seeded AGA on the test tasks");
  auto* baseline = app.add_subcommand("baseline", "run the configured baselines on the test tasks");
  auto* report = app.add_subcommand("report", "aggregate run results");

  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    Pipeline p(resolve(o), &std::cerr);
    if (app.got_subcommand(synth)) {
      p.synth();
    } else if (app.got_subcommand(ingest)) {
      p.ingest(o.input);
    } else if (app.got_subcommand(build)) {
      std::cout << p.build_meta() << " new evaluations\n";
    } else if (app.got_subcommand(entropy)) {
      p.entropy_report().write(std::cout);
    } else if (app.got_subcommand(distance)) {
      p.train_distance();
    } else if (app.got_subcommand(screener)) {
      std::cout << "held-out spearman " << format_double(p.train_screener()) << '\n';
    } else if (app.got_subcommand(optimize)) {
      print_records(p.optimize());
    } else if (app.got_subcommand(baseline)) {
      print_records(p.baseline());
    } else if (app.got_subcommand(report)) {
      p.report();
      std::cout << read_file(p.path("report.txt"));
    }
  } catch (const std::exception& e) {
    std::cerr << "metahpo: " << stage << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
