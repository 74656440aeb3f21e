#pragma once

// Per-task forecasting models and their training/evaluation.
//
// Every model maps a batch of windows (batch x N_S normalized loads) to a
// batch x 1 matrix of next-interval predictions.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "metahpo/layers.hpp"
#include "metahpo/schema.hpp"
#include "metahpo/traffic_data.hpp"

namespace metahpo {

class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual Matrix forward(const Matrix& windows, bool training) = 0;
  // Backpropagates d loss / d output of the last forward() call.
  virtual void backward(const Matrix& grad_out) = 0;
  virtual ParamList params() = 0;
  virtual std::size_t window() const = 0;
  virtual ModelKind kind() const = 0;
};

struct AdnnShape {
  std::size_t window = 6;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t d_model = 8;
};

// Encoder/decoder attention network. Loads are lifted to d_model by a learned
// projection and a sinusoidal positional encoding is added; the decoder's
// self-attention sees the same embedded input as the encoder. Every sub-block
// is followed by a residual connection and batch normalization. The decoder
// output is flattened into a ReLU layer of width d_model and a single output
// neuron.
class Adnn final : public Forecaster {
 public:
  Adnn(const AdnnShape& shape, std::uint64_t seed);

  Matrix forward(const Matrix& windows, bool training) override;
  void backward(const Matrix& grad_out) override;
  ParamList params() override;
  std::size_t window() const override { return shape_.window; }
  ModelKind kind() const override { return ModelKind::adnn; }

  // Output of the last encoder block from the most recent forward pass.
  const Matrix& encoded() const { return encoded_; }

 private:
  struct FeedForward {
    Dense expand;
    ActivationLayer relu{Activation::relu};
    Dense project;
    Matrix forward(const Matrix& x) { return project.forward(relu.forward(expand.forward(x))); }
    Matrix backward(const Matrix& dy) { return expand.backward(relu.backward(project.backward(dy))); }
  };
  struct EncoderBlock {
    MultiHeadAttention attention;
    BatchNorm norm1;
    FeedForward ff;
    BatchNorm norm2;
  };
  struct DecoderBlock {
    MultiHeadAttention self_attention;
    BatchNorm norm1;
    MultiHeadAttention cross_attention;
    BatchNorm norm2;
    FeedForward ff;
    BatchNorm norm3;
  };

  AdnnShape shape_;
  Dense embed_;
  Matrix positional_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  Dense fc_;
  ActivationLayer fc_relu_{Activation::relu};
  Dense out_;
  Matrix encoded_;
  std::size_t batch_ = 0;
  bool recorded_ = false;
};

// Sinusoidal positional encoding, rows = positions.
Matrix positional_encoding(std::size_t positions, std::size_t width);

class MlpForecaster final : public Forecaster {
 public:
  MlpForecaster(std::size_t window, std::size_t layers, std::size_t units, std::uint64_t seed);

  Matrix forward(const Matrix& windows, bool training) override;
  void backward(const Matrix& grad_out) override;
  ParamList params() override;
  std::size_t window() const override { return window_; }
  ModelKind kind() const override { return ModelKind::mlp; }

 private:
  std::size_t window_;
  std::vector<Dense> hidden_;
  std::vector<ActivationLayer> relus_;
  Dense out_;
};

// Stacked GRU or LSTM over the window, last hidden state -> one neuron.
class RecurrentForecaster final : public Forecaster {
 public:
  RecurrentForecaster(ModelKind cell, std::size_t window, std::size_t layers, std::size_t units,
                      std::uint64_t seed);

  Matrix forward(const Matrix& windows, bool training) override;
  void backward(const Matrix& grad_out) override;
  ParamList params() override;
  std::size_t window() const override { return window_; }
  ModelKind kind() const override { return cell_; }

 private:
  ModelKind cell_;
  std::size_t window_;
  std::vector<Gru> grus_;
  std::vector<Lstm> lstms_;
  Dense out_;
  std::size_t steps_ = 0;
  std::size_t batch_ = 0;
};

// Deterministic given (schema, strategy, seed). Throws SchemaError for
// strategies off the grid, e.g. heads not dividing d_model.
std::unique_ptr<Forecaster> build_model(const HyperParamSchema& schema, const Strategy& strategy,
                                        std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean squared error over the epoch's batches
};

// Minibatch AdamW on MSE. Throws TrainingError carrying the epoch index if
// the loss or any parameter becomes non-finite.
TrainResult train(Forecaster& model, const SampleSet& samples, const TrainConfig& config);

// Inference-mode predictions, one per input row.
std::vector<double> predict(Forecaster& model, const Matrix& inputs);

struct EvalReport {
  double mse = 0.0;
  double r2 = 0.0;
  bool r2_defined = true;  // false when labels have zero variance (r2 reported as 0)
};

EvalReport evaluate_predictions(std::span<const double> predictions, std::span<const double> labels);
EvalReport evaluate(Forecaster& model, const SampleSet& samples);

}  // namespace metahpo
