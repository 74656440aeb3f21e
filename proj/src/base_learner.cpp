#include "metahpo/base_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "metahpo/adamw.hpp"
#include "metahpo/errors.hpp"

namespace metahpo {

namespace {

Matrix tile_rows(const Matrix& block, std::size_t times) {
  Matrix out(block.rows() * times, block.cols());
  for (std::size_t i = 0; i < times; ++i) out.set_rows(i * block.rows(), block);
  return out;
}

std::size_t as_count(double v) { return static_cast<std::size_t>(std::llround(v)); }

}  // namespace

// --- ADNN ------------------------------------------------------------------

Matrix positional_encoding(std::size_t positions, std::size_t width) {
  Matrix pe(positions, width);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Adnn::Adnn(const AdnnShape& shape, std::uint64_t seed) : shape_(shape) {
  if (shape.window == 0 || shape.layers == 0 || shape.d_model == 0) {
    throw SchemaError("adnn: window, layers and d_model must be positive");
  }
  if (shape.heads == 0 || shape.d_model % shape.heads != 0) {
    throw SchemaError("adnn: heads must divide d_model");
  }
  Rng rng(seed);
  const std::size_t d = shape.d_model;
  const std::size_t s = shape.window;
  embed_ = Dense(1, d, rng, "embed");
  positional_ = positional_encoding(s, d);
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderBlock block{MultiHeadAttention(d, shape.heads, s, rng, p + ".attn"),
                       BatchNorm(d, p + ".bn1"),
                       {Dense(d, 4 * d, rng, p + ".ff1"), ActivationLayer(Activation::relu),
                        Dense(4 * d, d, rng, p + ".ff2")},
                       BatchNorm(d, p + ".bn2")};
    encoder_.push_back(std::move(block));
  }
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    DecoderBlock block{MultiHeadAttention(d, shape.heads, s, rng, p + ".self"),
                       BatchNorm(d, p + ".bn1"),
                       MultiHeadAttention(d, shape.heads, s, rng, p + ".cross"),
                       BatchNorm(d, p + ".bn2"),
                       {Dense(d, 4 * d, rng, p + ".ff1"), ActivationLayer(Activation::relu),
                        Dense(4 * d, d, rng, p + ".ff2")},
                       BatchNorm(d, p + ".bn3")};
    decoder_.push_back(std::move(block));
  }
  fc_ = Dense(s * d, d, rng, "fc");
  out_ = Dense(d, 1, rng, "out");
}

ParamList Adnn::params() {
  ParamList p = embed_.params();
  for (auto& b : encoder_) {
    append(p, b.attention.params());
    append(p, b.norm1.params());
    append(p, b.ff.expand.params());
    append(p, b.ff.project.params());
    append(p, b.norm2.params());
  }
  for (auto& b : decoder_) {
    append(p, b.self_attention.params());
    append(p, b.norm1.params());
    append(p, b.cross_attention.params());
    append(p, b.norm2.params());
    append(p, b.ff.expand.params());
    append(p, b.ff.project.params());
    append(p, b.norm3.params());
  }
  append(p, fc_.params());
  append(p, out_.params());
  return p;
}

Matrix Adnn::forward(const Matrix& windows, bool training) {
  if (windows.cols() != shape_.window) throw ShapeError("adnn: window length mismatch");
  batch_ = windows.rows();
  const std::size_t s = shape_.window;
  const std::size_t d = shape_.d_model;
  const Matrix embedded =
      embed_.forward(windows.reshaped(batch_ * s, 1)) + tile_rows(positional_, batch_);

  Matrix enc = embedded;
  for (auto& b : encoder_) {
    enc = b.norm1.forward(enc + b.attention.forward(enc, enc), training);
    enc = b.norm2.forward(enc + b.ff.forward(enc), training);
  }
  encoded_ = enc;

  Matrix dec = embedded;
  for (auto& b : decoder_) {
    dec = b.norm1.forward(dec + b.self_attention.forward(dec, dec), training);
    dec = b.norm2.forward(dec + b.cross_attention.forward(dec, encoded_), training);
    dec = b.norm3.forward(dec + b.ff.forward(dec), training);
  }
  const Matrix hidden = fc_relu_.forward(fc_.forward(dec.reshaped(batch_, s * d)));
  recorded_ = true;
  return out_.forward(hidden);
}

void Adnn::backward(const Matrix& grad_out) {
  if (!recorded_) throw UsageError("adnn: backward() without forward()");
  const std::size_t s = shape_.window;
  const std::size_t d = shape_.d_model;
  Matrix ddec = fc_.backward(fc_relu_.backward(out_.backward(grad_out))).reshaped(batch_ * s, d);

  Matrix dencoded(batch_ * s, d);
  for (std::size_t l = decoder_.size(); l-- > 0;) {
    auto& b = decoder_[l];
    Matrix g = b.norm3.backward(ddec);
    g += b.ff.backward(g);
    g = b.norm2.backward(g);
    auto [dq, dkv] = b.cross_attention.backward(g);
    dencoded += dkv;
    g += dq;
    g = b.norm1.backward(g);
    auto [dq_self, dkv_self] = b.self_attention.backward(g);
    ddec = g + dq_self + dkv_self;
  }

  Matrix denc = std::move(dencoded);
  for (std::size_t l = encoder_.size(); l-- > 0;) {
    auto& b = encoder_[l];
    Matrix g = b.norm2.backward(denc);
    g += b.ff.backward(g);
    g = b.norm1.backward(g);
    auto [dq, dkv] = b.attention.backward(g);
    denc = g + dq + dkv;
  }
  embed_.backward(denc + ddec);
}

// --- MLP -------------------------------------------------------------------

MlpForecaster::MlpForecaster(std::size_t window, std::size_t layers, std::size_t units,
                             std::uint64_t seed)
    : window_(window) {
  if (window == 0 || layers == 0 || units == 0) throw SchemaError("mlp: sizes must be positive");
  Rng rng(seed);
  std::size_t in = window;
  for (std::size_t l = 0; l < layers; ++l) {
    hidden_.emplace_back(in, units, rng, "hidden" + std::to_string(l));
    relus_.emplace_back(Activation::relu);
    in = units;
  }
  out_ = Dense(in, 1, rng, "out");
}

ParamList MlpForecaster::params() {
  ParamList p;
  for (auto& h : hidden_) append(p, h.params());
  append(p, out_.params());
  return p;
}

Matrix MlpForecaster::forward(const Matrix& windows, bool) {
  if (windows.cols() != window_) throw ShapeError("mlp: window length mismatch");
  Matrix x = windows;
  for (std::size_t l = 0; l < hidden_.size(); ++l) x = relus_[l].forward(hidden_[l].forward(x));
  return out_.forward(x);
}

void MlpForecaster::backward(const Matrix& grad_out) {
  Matrix g = out_.backward(grad_out);
  for (std::size_t l = hidden_.size(); l-- > 0;) g = hidden_[l].backward(relus_[l].backward(g));
}

// --- GRU / LSTM ------------------------------------------------------------

RecurrentForecaster::RecurrentForecaster(ModelKind cell, std::size_t window, std::size_t layers,
                                         std::size_t units, std::uint64_t seed)
    : cell_(cell), window_(window) {
  if (cell != ModelKind::gru && cell != ModelKind::lstm) {
    throw SchemaError("recurrent forecaster needs gru or lstm");
  }
  if (window == 0 || layers == 0 || units == 0) throw SchemaError("rnn: sizes must be positive");
  Rng rng(seed);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? 1 : units;
    const std::string name = std::string(to_string(cell)) + std::to_string(l);
    if (cell == ModelKind::gru) {
      grus_.emplace_back(in, units, rng, name);
    } else {
      lstms_.emplace_back(in, units, rng, name);
    }
  }
  out_ = Dense(units, 1, rng, "out");
}

ParamList RecurrentForecaster::params() {
  ParamList p;
  for (auto& g : grus_) append(p, g.params());
  for (auto& l : lstms_) append(p, l.params());
  append(p, out_.params());
  return p;
}

Matrix RecurrentForecaster::forward(const Matrix& windows, bool) {
  if (windows.cols() != window_) throw ShapeError("rnn: window length mismatch");
  batch_ = windows.rows();
  steps_ = window_;
  std::vector<Matrix> seq(steps_);
  for (std::size_t t = 0; t < steps_; ++t) seq[t] = windows.slice_cols(t, 1);
  for (auto& g : grus_) seq = g.forward(seq);
  for (auto& l : lstms_) seq = l.forward(seq);
  return out_.forward(seq.back());
}

void RecurrentForecaster::backward(const Matrix& grad_out) {
  std::vector<Matrix> grads(steps_);
  const Matrix dlast = out_.backward(grad_out);
  for (std::size_t t = 0; t + 1 < steps_; ++t) grads[t] = Matrix(batch_, dlast.cols());
  grads.back() = dlast;
  for (std::size_t l = grus_.size(); l-- > 0;) grads = grus_[l].backward(grads);
  for (std::size_t l = lstms_.size(); l-- > 0;) grads = lstms_[l].backward(grads);
}

std::unique_ptr<Forecaster> build_model(const HyperParamSchema& schema, const Strategy& strategy,
                                        std::uint64_t seed) {
  schema.require_valid(strategy);
  const std::size_t window = as_count(schema.value(strategy, genes::window));
  const std::size_t layers = as_count(schema.value(strategy, genes::layers));
  switch (schema.kind()) {
    case ModelKind::adnn:
      return std::make_unique<Adnn>(
          AdnnShape{window, layers, as_count(schema.value(strategy, genes::heads)),
                    as_count(schema.value(strategy, genes::d_model))},
          seed);
    case ModelKind::mlp:
      return std::make_unique<MlpForecaster>(window, layers,
                                             as_count(schema.value(strategy, genes::units)), seed);
    case ModelKind::gru:
    case ModelKind::lstm:
      return std::make_unique<RecurrentForecaster>(
          schema.kind(), window, layers, as_count(schema.value(strategy, genes::units)), seed);
    case ModelKind::custom:
      break;
  }
  throw SchemaError("custom schemas have no model");
}

// --- training / evaluation -------------------------------------------------

TrainResult train(Forecaster& model, const SampleSet& samples, const TrainConfig& config) {
  if (samples.empty()) throw UsageError("train: empty training set");
  if (samples.window != model.window()) throw ShapeError("train: sample window mismatch");
  if (config.batch_size == 0) throw ConfigError("train: batch size must be positive");
  const ParamList params = model.params();
  AdamW optimizer(params, {config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8});
  Rng rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.epoch_loss.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      Matrix inputs(n, samples.window);
      Matrix targets(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = order[start + i];
        inputs.set_rows(i, samples.inputs.slice_rows(k, 1));
        targets[i] = samples.labels[k];
      }
      optimizer.zero_grad();
      const Matrix predicted = model.forward(inputs, true);
      Matrix grad(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double err = predicted[i] - targets[i];
        total += err * err;
        grad[i] = 2.0 * err / static_cast<double>(n);
      }
      if (!std::isfinite(total)) throw TrainingError("training loss diverged", epoch);
      model.backward(grad);
      optimizer.step();
    }
    const double loss = total / static_cast<double>(order.size());
    for (const Param* p : params) {
      if (!p->value.all_finite()) throw TrainingError("parameters became non-finite", epoch);
    }
    result.epoch_loss.push_back(loss);
  }
  return result;
}

std::vector<double> predict(Forecaster& model, const Matrix& inputs) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(inputs.rows());
  for (std::size_t start = 0; start < inputs.rows(); start += kChunk) {
    const std::size_t n = std::min(kChunk, inputs.rows() - start);
    const Matrix y = model.forward(inputs.slice_rows(start, n), false);
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

EvalReport evaluate_predictions(std::span<const double> predictions, std::span<const double> labels) {
  if (labels.empty()) throw UsageError("evaluate: empty sample set");
  if (predictions.size() != labels.size()) throw ShapeError("evaluate: size mismatch");
  const double n = static_cast<double>(labels.size());
  const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sse += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
    sst += (labels[i] - mean) * (labels[i] - mean);
  }
  EvalReport report;
  report.mse = sse / n;
  if (sst > 0.0) {
    report.r2 = 1.0 - sse / sst;
  } else {
    report.r2 = 0.0;
    report.r2_defined = false;
  }
  return report;
}

EvalReport evaluate(Forecaster& model, const SampleSet& samples) {
  const auto predictions = predict(model, samples.inputs);
  return evaluate_predictions(predictions, samples.labels);
}

}  // namespace metahpo
