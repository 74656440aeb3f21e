#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "metahpo/errors.hpp"
#include "metahpo/meta_features.hpp"

using namespace metahpo;

namespace {

std::vector<std::string> all_names() {
  return {kCharacteristicNames.begin(), kCharacteristicNames.end()};
}

}  // namespace

TEST_SUITE("meta_features") {

TEST_CASE("characteristics of a constant series") {
  const std::vector<double> flat(50, 0.3);
  const auto c = characteristics(flat);
  CHECK(c.get("mean") == 0.3);
  CHECK(c.get("variance") == 0.0);
  CHECK(c.get("acf_lag1") == 0.0);
  CHECK(c.get("skewness") == 0.0);
  CHECK(c.get("coef_variation") == 0.0);
  for (double v : c.values) CHECK(std::isfinite(v));
}

TEST_CASE("characteristics of an alternating series") {
  std::vector<double> alt;
  for (int i = 0; i < 100; ++i) alt.push_back(i % 2);
  const auto c = characteristics(alt);
  CHECK(c.get("mean") == 0.5);
  CHECK(c.get("acf_lag1") == -1.0);
  CHECK(c.get("median") == 0.5);
  CHECK(c.get("maximum") == 1.0);
  CHECK(c.get("minimum") == 0.0);
  CHECK(c.get("variance") == 0.25);
}

TEST_CASE("daily sinusoid has a strong daily autocorrelation") {
  std::vector<double> s;
  for (int t = 0; t < 144 * 14; ++t) s.push_back(0.5 + 0.5 * std::sin(2 * std::numbers::pi * t / 144.0));
  CHECK(characteristics(s).get("acf_daily") > 0.9);
}

TEST_CASE("moments and trend against direct formulas") {
  const std::vector<double> x{0.1, 0.4, 0.2, 0.9, 0.7};
  const auto c = characteristics(x);
  double mean = 0.46, m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    m2 += std::pow(v - mean, 2) / 5;
    m3 += std::pow(v - mean, 3) / 5;
    m4 += std::pow(v - mean, 4) / 5;
  }
  CHECK(c.get("mean") == doctest::Approx(mean).epsilon(1e-14));
  CHECK(c.get("skewness") == doctest::Approx(m3 / std::pow(m2, 1.5)).epsilon(1e-12));
  CHECK(c.get("kurtosis") == doctest::Approx(m4 / (m2 * m2) - 3).epsilon(1e-12));
  CHECK(c.get("median") == 0.4);
  CHECK(c.get("coef_variation") == doctest::Approx(std::sqrt(m2) / mean).epsilon(1e-12));
  // Least squares on t = 0, .25, .5, .75, 1: 0.425 / 0.625.
  CHECK(c.get("trend_slope") == doctest::Approx(0.68).epsilon(1e-12));
  CHECK(characteristics(x).values == c.values);
}

TEST_CASE("equal-frequency bins") {
  CHECK(equal_frequency_bins(std::vector<double>{4, 1, 3, 2}, 2) == std::vector<std::size_t>{1, 0, 1, 0});
  // Ties share the bin of their first rank.
  CHECK(equal_frequency_bins(std::vector<double>{1, 1, 1, 2}, 2) == std::vector<std::size_t>{0, 0, 0, 1});
  CHECK_THROWS_AS(equal_frequency_bins(std::vector<double>{1, 2}, 1), ConfigError);
}

TEST_CASE("entropy of a four-task toy store") {
  const std::vector<std::string> genes{"lr"};
  const std::vector<std::vector<double>> optimal{{0.1}, {0.01}, {0.001}, {0.0001}};
  // "split" separates every task; "flat" is identical everywhere.
  const std::vector<std::vector<double>> features{{0.0, 1.0}, {0.3, 1.0}, {0.6, 1.0}, {0.9, 1.0}};
  const auto report = entropy_report(genes, optimal, {"split", "flat"}, features, 4);
  CHECK(std::abs(report.h_gene[0] - 2.0) < 1e-12);
  CHECK(report.h_conditional(0, 0) == 0.0);
  CHECK(std::abs(report.h_conditional(0, 1) - 2.0) < 1e-12);

  const auto same = entropy_report(genes, {{1}, {1}, {1}, {1}}, {"split", "flat"}, features, 4);
  CHECK(same.h_gene[0] == 0.0);
  CHECK(same.h_conditional(0, 0) == 0.0);
  CHECK(same.h_conditional(0, 1) == 0.0);

  CHECK_THROWS_AS(entropy_report(genes, optimal, {"split", "flat"}, features, 1), ConfigError);
}

TEST_CASE("a partitioning characteristic removes all uncertainty") {
  // Eight tasks, gene uniform over four values; "a" orders tasks by gene value.
  std::vector<std::vector<double>> optimal, features;
  for (int t = 0; t < 8; ++t) {
    optimal.push_back({static_cast<double>(t % 4)});
    features.push_back({static_cast<double>(t % 4) + 0.01 * t, static_cast<double>(t)});
  }
  const auto report = entropy_report({"g"}, optimal, {"a", "b"}, features, 4);
  CHECK(std::abs(report.h_gene[0] - 2.0) < 1e-12);
  CHECK(report.h_conditional(0, 0) == 0.0);
  CHECK(report.h_conditional(0, 1) > 0.0);
  const auto spec = select_meta_features(report, 1);
  CHECK(spec.names == std::vector<std::string>{"a"});
}

TEST_CASE("conditional entropy never exceeds the marginal") {
  std::mt19937_64 rng(17);
  for (int store = 0; store < 100; ++store) {
    std::uniform_int_distribution<int> tasks_d(2, 40), value_d(0, 4);
    std::uniform_real_distribution<double> u(0, 1);
    const int tasks = tasks_d(rng);
    std::vector<std::vector<double>> optimal, features;
    for (int t = 0; t < tasks; ++t) {
      optimal.push_back({double(value_d(rng)), double(value_d(rng) % 2)});
      std::vector<double> f;
      for (int c = 0; c < 11; ++c) f.push_back(c == 3 ? std::round(u(rng) * 3) : u(rng));
      features.push_back(f);
    }
    const auto report = entropy_report({"g1", "g2"}, optimal, all_names(), features, 5);
    for (std::size_t g = 0; g < 2; ++g) {
      CHECK(report.h_gene[g] >= 0.0);
      for (std::size_t c = 0; c < 11; ++c) {
        CHECK(report.h_conditional(g, c) >= 0.0);
        CHECK(report.h_conditional(g, c) <= report.h_gene[g] + 1e-12);
      }
    }
  }
}

TEST_CASE("report and selection are invariant to task order") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> optimal, features;
  for (int t = 0; t < 30; ++t) {
    optimal.push_back({double(t % 3), double((t * 7) % 4)});
    std::vector<double> f;
    for (int c = 0; c < 11; ++c) f.push_back(c == 5 ? double(t % 3) : u(rng));
    features.push_back(f);
  }
  const auto base = entropy_report({"a", "b"}, optimal, all_names(), features, 5);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> o2, f2;
    for (auto i : perm) {
      o2.push_back(optimal[i]);
      f2.push_back(features[i]);
    }
    const auto shuffled = entropy_report({"a", "b"}, o2, all_names(), f2, 5);
    CHECK(shuffled.h_gene == base.h_gene);
    CHECK(shuffled.h_conditional == base.h_conditional);
    CHECK(select_meta_features(shuffled, 6).names == select_meta_features(base, 6).names);
  }
  const auto all = select_meta_features(base, 11);
  CHECK(all.size() == 11);
  CHECK(all.names.front() == "maximum");
  const auto mean = base.mean_conditional();
  for (std::size_t i = 1; i < all.names.size(); ++i) {
    const auto a = characteristic_index(all.names[i - 1]), b = characteristic_index(all.names[i]);
    CHECK(mean[a] <= mean[b]);
  }
  CHECK_THROWS_AS(select_meta_features(base, 12), ConfigError);
}

TEST_CASE("ties in mean conditional entropy break by name") {
  EntropyReport r;
  r.genes = {"g"};
  r.characteristics = {"zeta", "alpha", "mid"};
  r.h_gene = {1.0};
  r.h_conditional = Matrix{{0.5, 0.5, 0.1}};
  CHECK(select_meta_features(r, 3).names == std::vector<std::string>{"mid", "alpha", "zeta"});
}

TEST_CASE("meta-feature scaling, clipping and inversion") {
  std::vector<CharacteristicVector> store;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> s;
    for (int i = 0; i < 300; ++i) s.push_back(0.1 * t + 0.05 * std::sin(i * (t + 1) * 0.1));
    store.push_back(characteristics(s));
  }
  MetaFeatureSpec spec;
  spec.names = {"mean", "variance", "maximum"};
  spec.fit_ranges(store);

  CharacteristicVector low;
  for (std::size_t f = 0; f < spec.size(); ++f) low.values[characteristic_index(spec.names[f])] = spec.min[f];
  for (double v : spec.scale(low)) CHECK(v == 0.0);

  CharacteristicVector high = low;
  high.values[characteristic_index("mean")] = spec.max[0] + 10.0;
  CHECK(spec.scale(high)[0] == 1.0);

  for (const auto& c : store) {
    const auto scaled = spec.scale(c);
    const auto raw = spec.unscale(scaled);
    for (std::size_t f = 0; f < spec.size(); ++f) {
      CHECK(scaled[f] >= 0.0);
      CHECK(scaled[f] <= 1.0);
      CHECK(std::abs(raw[f] - c.get(spec.names[f])) < 1e-12);
    }
  }

  std::stringstream io;
  spec.write(io);
  const auto back = MetaFeatureSpec::read(io);
  CHECK(back.names == spec.names);
  CHECK(back.min == spec.min);
  CHECK(back.max == spec.max);
}

TEST_CASE("report rows") {
  const auto report = entropy_report({"g"}, {{0}, {1}}, {"c"}, {{0.0}, {1.0}}, 2);
  std::ostringstream out;
  report.write(out);
  CHECK(out.str() == "gene,characteristic,H_gene,H_conditional\ng,-,1,1\ng,c,1,0\n");
}

}
