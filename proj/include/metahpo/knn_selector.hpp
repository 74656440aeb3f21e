#pragma once

// Learned task-to-task distance and K-nearest meta-sample retrieval.
//
// The distance from query task r to stored task p is D(features_p,
// features_r), trained to match RD_{p->r}: the validation MSE task r reaches
// with p's optimal strategy, min-max scaled over the pair corpus.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "metahpo/layers.hpp"
#include "metahpo/meta_store.hpp"

namespace metahpo {

struct PairSample {
  int source = 0;  // p
  int query = 0;   // r
  double rd = 0.0;
};

struct PairCorpus {
  std::vector<PairSample> pairs;
  Matrix inputs;                // rows: [features_p, features_r]
  std::vector<double> targets;  // rd min-max scaled to [0, 1]
  double rd_min = 0.0;
  double rd_max = 0.0;

  std::size_t size() const { return pairs.size(); }
};

// Every ordered pair (p, r), self pairs included, read from r's table
// without retraining. A divergent lookup (infinite MSE) is capped at the
// largest finite RD of the corpus.
PairCorpus build_pair_corpus(std::span<const FitnessTable> tables,
                             std::span<const MetaSample> samples, const HyperParamSchema& schema);

struct DistanceConfig {
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  std::size_t epochs = 2000;
  std::size_t batch_size = 0;  // 0 = full batch
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

// MLP [2I] -> hidden -> hidden -> 1 with ReLU and a softplus output.
class DistanceNet {
 public:
  DistanceNet(std::size_t features, std::size_t hidden, std::uint64_t seed);

  Matrix forward(const Matrix& pairs);
  void backward(const Matrix& grad_out);
  ParamList params();
  std::size_t feature_width() const { return features_; }
  std::size_t hidden() const { return hidden_; }

  double distance(std::span<const double> source, std::span<const double> query);

 private:
  std::size_t features_, hidden_;
  Dense l1_, l2_, l3_;
  ActivationLayer a1_{Activation::relu}, a2_{Activation::relu}, out_{Activation::softplus};
};

// Per-epoch MSE on the scaled targets. Throws TrainingError on divergence.
std::vector<double> train_distance_net(DistanceNet& net, const PairCorpus& corpus,
                                       const DistanceConfig& config);

struct Neighbor {
  MetaSample sample;
  double distance = 0.0;
};

// Exactly k samples by ascending predicted distance, ties by task id.
// Throws RetrievalError on an empty store and ConfigError if k is 0 or
// exceeds the store size.
std::vector<Neighbor> nearest(DistanceNet& net, std::span<const MetaSample> store,
                              std::span<const double> query, std::size_t k);

// Rows `query_task,rank,source_task,distance`, rank from 1.
void write_retrievals(std::ostream& out, int query_task, std::span<const Neighbor> neighbors,
                      bool header = true);

}  // namespace metahpo
