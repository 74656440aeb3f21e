#pragma once

// Fitness screener: predicts a (transformed) fitness score from a task's
// meta-features and a candidate strategy so the optimizer trains only the
// most promising offspring.
//
//   MFP:    T = GRN_t(f), w = softmax(GRN_w(f)), m = T (.) w   (width I)
//   GP:     g = GRN_g(Dense(e))                                 (width h)
//   fusion: z = GRN_z(Dense([m, g])), score = FC(h, h/4, 1)(z)

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metahpo/layers.hpp"
#include "metahpo/schema.hpp"

namespace metahpo {

// Per-gene min-max scaling over the gene's grid values, on a log10 axis for
// log-scale genes. A single-valued gene encodes as 0.
class GeneEncoder {
 public:
  explicit GeneEncoder(const HyperParamSchema& schema);

  std::size_t width() const { return lo_.size(); }
  std::vector<double> encode(const Strategy& s) const;
  // Continuous position -> nearest grid value per gene (in encoded space).
  Strategy nearest(std::span<const double> encoded) const;
  const HyperParamSchema& schema() const { return schema_; }

 private:
  double axis(std::size_t gene, double value) const;

  HyperParamSchema schema_;
  std::vector<double> lo_, hi_;
  std::vector<std::vector<double>> grid_codes_;  // encoded value per gene value
};

std::vector<double> encode_strategy(const HyperParamSchema& schema, const Strategy& s);

struct ScreenerConfig {
  std::size_t hidden = 512;
  double learning_rate = 1e-3;
  std::size_t batch_size = 252;
  std::size_t epochs = 400;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;

  // Widths, learning rate, batch and epochs of the published setup.
  static ScreenerConfig paper();
  // Narrow and short enough for single-CPU experiments.
  static ScreenerConfig desk();
  static ScreenerConfig preset(std::string_view name);
};

class ScreenerNet {
 public:
  ScreenerNet(std::size_t features, std::size_t genes, std::size_t hidden, std::uint64_t seed);

  // features: batch x I, genes: batch x G. Returns batch x 1 scores.
  Matrix forward(const Matrix& features, const Matrix& genes);
  void backward(const Matrix& grad_out);
  ParamList params();

  // Importance weights over meta-features from the last forward pass.
  const Matrix& importance() const { return importance_; }
  std::size_t feature_width() const { return features_; }
  std::size_t gene_width() const { return genes_; }
  std::size_t hidden() const { return hidden_; }

  GrnBlock& transform_block() { return mfp_transform_; }

 private:
  std::size_t features_, genes_, hidden_;
  GrnBlock mfp_transform_;
  GrnBlock mfp_weight_;
  ActivationLayer softmax_{Activation::softmax_rowwise};
  Dense gp_in_;
  GrnBlock gp_block_;
  Dense fuse_in_;
  GrnBlock fuse_block_;
  Dense head1_;
  ActivationLayer relu1_{Activation::relu};
  Dense head2_;
  ActivationLayer relu2_{Activation::relu};
  Dense head3_;
  Matrix transformed_, importance_;
  bool recorded_ = false;
};

// Monotone map from fitness to the regression target: z-scored log fitness.
// Fitness 0 (divergence) is floored at the smallest positive fitness seen.
struct TargetTransform {
  double floor = 1.0;
  double mean = 0.0;
  double scale = 1.0;

  static TargetTransform fit(std::span<const double> fitness);
  double apply(double fitness) const;
};

struct ScreenerData {
  Matrix features;  // rows x I
  Matrix genes;     // rows x G
  std::vector<double> targets;
};

// Per-epoch mean squared error. Throws TrainingError on a non-finite loss.
std::vector<double> train_screener(ScreenerNet& net, const ScreenerData& data,
                                   const ScreenerConfig& config);
std::vector<double> predict_scores(ScreenerNet& net, const Matrix& features, const Matrix& genes);

void write_loss_curve(std::ostream& out, std::span<const double> losses);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// Scores candidate strategies for one task without training anything.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::vector<double> score(std::span<const Strategy> candidates) = 0;
};

class GrnSurrogate final : public Surrogate {
 public:
  GrnSurrogate(ScreenerNet& net, const HyperParamSchema& schema, std::vector<double> features);
  std::vector<double> score(std::span<const Strategy> candidates) override;

 private:
  ScreenerNet* net_;
  GeneEncoder encoder_;
  std::vector<double> features_;
};

// Test double that scores with a supplied function, e.g. the true fitness.
class FunctionSurrogate final : public Surrogate {
 public:
  explicit FunctionSurrogate(std::function<double(const Strategy&)> f) : f_(std::move(f)) {}
  std::vector<double> score(std::span<const Strategy> candidates) override;

 private:
  std::function<double(const Strategy&)> f_;
};

// The `budget` highest-scoring candidates; ties go to the lower grid index.
std::vector<Strategy> screen(Surrogate& surrogate, const HyperParamSchema& schema,
                             std::span<const Strategy> candidates, std::size_t budget);

}  // namespace metahpo
