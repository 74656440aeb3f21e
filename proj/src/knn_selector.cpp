#include "metahpo/knn_selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "metahpo/adamw.hpp"
#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

PairCorpus build_pair_corpus(std::span<const FitnessTable> tables,
                             std::span<const MetaSample> samples, const HyperParamSchema& schema) {
  std::map<int, const FitnessTable*> by_task;
  for (const FitnessTable& t : tables) by_task[t.task_id()] = &t;
  PairCorpus corpus;
  if (samples.empty()) return corpus;
  const std::size_t width = samples.front().features.size();
  corpus.inputs = Matrix(samples.size() * samples.size(), 2 * width);

  double finite_max = 0.0;
  std::size_t row = 0;
  for (const MetaSample& p : samples) {
    const std::size_t label = schema.grid_index(p.label);
    for (const MetaSample& r : samples) {
      const auto it = by_task.find(r.task_id);
      if (it == by_task.end()) throw AssemblyError("no fitness table for task " + std::to_string(r.task_id));
      const double rd = it->second->at(label).mse;
      if (std::isfinite(rd)) finite_max = std::max(finite_max, rd);
      corpus.pairs.push_back({p.task_id, r.task_id, rd});
      std::copy(p.features.begin(), p.features.end(), corpus.inputs.row(row).begin());
      std::copy(r.features.begin(), r.features.end(), corpus.inputs.row(row).begin() + static_cast<std::ptrdiff_t>(width));
      ++row;
    }
  }
  for (PairSample& s : corpus.pairs)
    if (!std::isfinite(s.rd)) s.rd = finite_max;
  corpus.rd_min = corpus.rd_max = corpus.pairs.front().rd;
  for (const PairSample& s : corpus.pairs) {
    corpus.rd_min = std::min(corpus.rd_min, s.rd);
    corpus.rd_max = std::max(corpus.rd_max, s.rd);
  }
  const double width_rd = corpus.rd_max - corpus.rd_min;
  for (const PairSample& s : corpus.pairs) {
    corpus.targets.push_back(width_rd > 0.0 ? (s.rd - corpus.rd_min) / width_rd : 0.0);
  }
  return corpus;
}

DistanceNet::DistanceNet(std::size_t features, std::size_t hidden, std::uint64_t seed)
    : features_(features), hidden_(hidden) {
  if (features == 0 || hidden == 0) throw ConfigError("distance net needs positive widths");
  Rng rng(seed);
  l1_ = Dense(2 * features, hidden, rng, "distance.fc1");
  l2_ = Dense(hidden, hidden, rng, "distance.fc2");
  l3_ = Dense(hidden, 1, rng, "distance.out");
}

Matrix DistanceNet::forward(const Matrix& pairs) {
  if (pairs.cols() != 2 * features_) throw ShapeError("distance net: pair width mismatch");
  return out_.forward(l3_.forward(a2_.forward(l2_.forward(a1_.forward(l1_.forward(pairs))))));
}

void DistanceNet::backward(const Matrix& grad_out) {
  l1_.backward(a1_.backward(l2_.backward(a2_.backward(l3_.backward(out_.backward(grad_out))))));
}

ParamList DistanceNet::params() {
  ParamList p = l1_.params();
  append(p, l2_.params());
  append(p, l3_.params());
  return p;
}

double DistanceNet::distance(std::span<const double> source, std::span<const double> query) {
  if (source.size() != features_ || query.size() != features_) {
    throw ShapeError("distance net: feature width mismatch");
  }
  Matrix x(1, 2 * features_);
  std::copy(source.begin(), source.end(), x.row(0).begin());
  std::copy(query.begin(), query.end(), x.row(0).begin() + static_cast<std::ptrdiff_t>(features_));
  return forward(x)[0];
}

std::vector<double> train_distance_net(DistanceNet& net, const PairCorpus& corpus,
                                       const DistanceConfig& config) {
  const std::size_t n = corpus.size();
  if (n == 0) throw UsageError("distance corpus is empty");
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  const ParamList params = net.params();
  AdamW optimizer(params, {config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8});
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      Matrix x(b, corpus.inputs.cols());
      for (std::size_t i = 0; i < b; ++i) x.set_rows(i, corpus.inputs.slice_rows(order[start + i], 1));
      optimizer.zero_grad();
      const Matrix y = net.forward(x);
      Matrix grad(b, 1);
      for (std::size_t i = 0; i < b; ++i) {
        const double err = y[i] - corpus.targets[order[start + i]];
        total += err * err;
        grad[i] = 2.0 * err / static_cast<double>(b);
      }
      if (!std::isfinite(total)) throw TrainingError("distance loss diverged", epoch);
      net.backward(grad);
      optimizer.step();
    }
    curve.push_back(total / static_cast<double>(n));
  }
  return curve;
}

std::vector<Neighbor> nearest(DistanceNet& net, std::span<const MetaSample> store,
                              std::span<const double> query, std::size_t k) {
  if (store.empty()) throw RetrievalError("meta-sample store is empty");
  if (k == 0 || k > store.size()) {
    throw ConfigError("k must lie in [1, " + std::to_string(store.size()) + "]");
  }
  Matrix x(store.size(), 2 * net.feature_width());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].features.size() != net.feature_width() || query.size() != net.feature_width()) {
      throw ShapeError("meta-feature width does not match the distance net");
    }
    std::copy(store[i].features.begin(), store[i].features.end(), x.row(i).begin());
    std::copy(query.begin(), query.end(), x.row(i).begin() + static_cast<std::ptrdiff_t>(net.feature_width()));
  }
  const Matrix d = net.forward(x);
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return store[a].task_id < store[b].task_id;
  });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({store[order[i]], d[order[i]]});
  return out;
}

void write_retrievals(std::ostream& out, int query_task, std::span<const Neighbor> neighbors,
                      bool header) {
  if (header) out << "query_task,rank,source_task,distance\n";
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    out << query_task << ',' << i + 1 << ',' << neighbors[i].sample.task_id << ','
        << format_double(neighbors[i].distance) << '\n';
  }
}

}  // namespace metahpo
