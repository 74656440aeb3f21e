#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/meta_store.hpp"
#include "metahpo/optimizer_suite.hpp"
#include "metahpo/screening_grn.hpp"

using namespace metahpo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("metahpo_store_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

FitnessTable toy_table(int id, const HyperParamSchema& schema, std::vector<double> mse) {
  FitnessTable t(id, schema);
  for (std::size_t i = 0; i < mse.size(); ++i) t.set(i, {mse[i], fitness_from_mse(mse[i])});
  return t;
}

}  // namespace

TEST_CASE("fitness table: best index, ties and incompleteness") {
  const auto schema = MatchCountLandscape::make_schema(2, 2);
  FitnessTable t(7, schema);
  CHECK(t.size() == 4);
  CHECK(t.filled() == 0);
  CHECK_THROWS_AS(t.best_index(), AssemblyError);
  CHECK_THROWS_AS(t.at(0), AssemblyError);
  t.set(0, {0.5, 2.0});
  t.set(1, {0.25, 4.0});
  t.set(2, {0.25, 4.0});
  CHECK_THROWS_AS(t.best_index(), AssemblyError);
  t.set(3, {});
  CHECK(t.complete());
  CHECK(t.best_index() == 1);
  CHECK(t.at(3).diverged());
}

TEST_CASE("fitness table: round trip, partial last line, wrong schema") {
  const auto schema = MatchCountLandscape::make_schema(2, 2);
  FitnessTable t = toy_table(3, schema, {0.5, 0.125, 2.0, 1.0});
  t.set(2, {});
  std::stringstream buf;
  t.write(buf, schema);
  const FitnessTable back = FitnessTable::read(buf, schema);
  CHECK(back.task_id() == 3);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.at(i).mse == t.at(i).mse);
    CHECK(back.at(i).fitness == t.at(i).fitness);
  }

  std::string text = buf.str();
  text = text.substr(0, text.size() - 5);  // cut into the last row
  std::istringstream cut(text);
  const FitnessTable partial = FitnessTable::read(cut, schema);
  CHECK(partial.filled() == 3);

  std::istringstream again(buf.str());
  CHECK_THROWS_AS(FitnessTable::read(again, MatchCountLandscape::make_schema(2, 3)), SchemaError);
}

TEST_CASE("build_fitness_table resumes without re-evaluating") {
  const fs::path dir = scratch("resume");
  const fs::path path = table_path(dir, 11);
  CHECK(path.filename() == "task_11.csv");
  const Strategy target{{1, 2, 0}};
  BuildOptions opt;
  opt.chunk = 3;
  opt.max_new_evaluations = 10;
  {
    MatchCountLandscape f(3, 3, target);
    const FitnessTable partial = build_fitness_table(f, 11, path, opt);
    CHECK(f.evaluations() == 10);
    CHECK(partial.filled() == 10);
  }
  opt.max_new_evaluations = std::numeric_limits<std::size_t>::max();
  opt.threads = 3;
  MatchCountLandscape f(3, 3, target);
  const FitnessTable full = build_fitness_table(f, 11, path, opt);
  CHECK(f.evaluations() == 17);
  REQUIRE(full.complete());
  CHECK(full.best_index() == f.schema().grid_index(target));
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full.at(i).fitness == f.value(f.schema().grid()[i]));
  }
  // A third call has nothing to do.
  MatchCountLandscape idle(3, 3, target);
  build_fitness_table(idle, 11, path, opt);
  CHECK(idle.evaluations() == 0);
  // Other task id on the same file is refused.
  CHECK_THROWS_AS(build_fitness_table(idle, 12, path, opt), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("meta samples: labels, missing features, round trip") {
  const auto schema = MatchCountLandscape::make_schema(2, 2);
  std::vector<FitnessTable> tables{toy_table(1, schema, {1.0, 0.5, 2.0, 4.0}),
                                   toy_table(2, schema, {1.0, 2.0, 0.1, 0.1})};
  std::map<int, std::vector<double>> features{{1, {0.1, 0.2}}, {2, {0.3, 0.4}}};
  const auto samples = assemble_meta_samples(tables, features, schema);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].label == schema.grid()[1]);
  CHECK(samples[0].label_fitness == 2.0);
  CHECK(samples[1].label == schema.grid()[2]);

  std::stringstream buf;
  write_meta_samples(buf, samples, schema);
  const auto back = read_meta_samples(buf, schema);
  REQUIRE(back.size() == 2);
  CHECK(back[1].task_id == 2);
  CHECK(back[1].features == samples[1].features);
  CHECK(back[1].label == samples[1].label);
  CHECK(back[1].label_fitness == samples[1].label_fitness);

  features.erase(2);
  CHECK_THROWS_AS(assemble_meta_samples(tables, features, schema), AssemblyError);
  features[2] = {0.3, 0.4};
  tables[1] = FitnessTable(2, schema);
  CHECK_THROWS_AS(assemble_meta_samples(tables, features, schema), AssemblyError);
}

TEST_CASE("screener corpus has one row per task and grid point") {
  const auto schema = MatchCountLandscape::make_schema(2, 2);
  std::vector<FitnessTable> tables{toy_table(1, schema, {1.0, 0.5, 2.0, 4.0}),
                                   toy_table(2, schema, {1.0, 2.0, 0.1, 0.1})};
  const std::map<int, std::vector<double>> features{{1, {0.1, 0.2}}, {2, {0.3, 0.4}}};
  const auto corpus = screener_corpus(tables, features, schema);
  REQUIRE(corpus.size() == 8);
  CHECK(corpus.features.rows() == 8);
  CHECK(corpus.genes.cols() == 2);
  CHECK(corpus.task_ids[5] == 2);
  CHECK(corpus.grid_indices[5] == 1);
  CHECK(corpus.features(5, 0) == 0.3);
  CHECK(corpus.fitness[5] == 0.5);
  CHECK(corpus.mse[6] == 0.1);
  const auto code = encode_strategy(schema, schema.grid()[3]);
  CHECK(corpus.genes(3, 0) == code[0]);
  CHECK(corpus.genes(3, 1) == code[1]);
}
