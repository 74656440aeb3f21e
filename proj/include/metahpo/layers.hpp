#pragma once

// Differentiable building blocks with hand-written backward rules.
//
// Every layer caches what it needs during forward() and accumulates parameter
// gradients during backward(). Calling backward() without a preceding
// forward() throws UsageError. Gradients accumulate until zero_grad().

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metahpo/tensor.hpp"

namespace metahpo {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  // Non-trainable entries (batch-norm running statistics) are serialized but
  // never touched by the optimizer or gradient checks.
  bool trainable = true;

  Param() = default;
  Param(std::string n, Matrix v, bool is_trainable = true)
      : name(std::move(n)), value(std::move(v)),
        grad(value.rows(), value.cols()), trainable(is_trainable) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);
std::vector<Param*> trainable(const ParamList& params);
std::size_t parameter_count(const ParamList& params);
void append(ParamList& into, const ParamList& more);

using Rng = std::mt19937_64;

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng, const std::string& name);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&weight_, &bias_}; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  std::size_t in() const { return weight_.value.rows(); }
  std::size_t out() const { return weight_.value.cols(); }

 private:
  Param weight_;
  Param bias_;
  Matrix input_;
  bool recorded_ = false;
};

class ActivationLayer {
 public:
  explicit ActivationLayer(Activation kind = Activation::linear) : kind_(kind) {}

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);

 private:
  Activation kind_;
  Matrix input_;
  Matrix output_;
  bool recorded_ = false;
};

// Row-wise layer normalization with learned gain and bias.
class LayerNorm {
 public:
  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  LayerNorm(std::size_t width, const std::string& name);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&gain_, &bias_}; }

  Param& gain() { return gain_; }
  Param& bias() { return bias_; }

 private:
  Param gain_;
  Param bias_;
  Matrix normalized_;
  std::vector<double> inv_std_;
  bool recorded_ = false;
};

// Column-wise batch normalization over all rows of the input. Training mode
// uses batch statistics and updates running estimates with momentum 0.9;
// inference uses the running estimates.
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  BatchNorm(std::size_t width, const std::string& name);

  Matrix forward(const Matrix& x, bool training);
  Matrix backward(const Matrix& dy);
  ParamList params() { return {&gain_, &bias_, &running_mean_, &running_var_}; }

 private:
  Param gain_;
  Param bias_;
  Param running_mean_;
  Param running_var_;
  Matrix normalized_;
  std::vector<double> inv_std_;
  bool training_ = false;
  bool recorded_ = false;
};

// Multi-head scaled dot-product attention over blocks of `seq_len` rows.
// Inputs are stacked (batch * seq_len) x d_model matrices; attention never
// mixes rows belonging to different batch entries.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, std::size_t seq_len, Rng& rng,
                     const std::string& name);

  // Queries from `query_in`, keys and values from `kv_in`.
  Matrix forward(const Matrix& query_in, const Matrix& kv_in);
  // Returns {d query_in, d kv_in}.
  std::pair<Matrix, Matrix> backward(const Matrix& dy);
  ParamList params() { return {&wq_, &wk_, &wv_, &wo_, &bo_}; }

  Param& wq() { return wq_; }
  Param& wk() { return wk_; }
  Param& wv() { return wv_; }
  Param& wo() { return wo_; }
  Param& bo() { return bo_; }
  std::size_t heads() const { return heads_; }
  // Attention weights of the last forward pass for batch entry b and head h.
  const Matrix& weights(std::size_t b, std::size_t h) const;

 private:
  std::size_t d_model_ = 0;
  std::size_t heads_ = 1;
  std::size_t seq_len_ = 1;
  Param wq_, wk_, wv_, wo_, bo_;
  Matrix query_in_, kv_in_, q_, k_, v_, concat_;
  std::vector<Matrix> attn_;  // batch * heads entries, seq_len x seq_len
  bool recorded_ = false;
};

// Single attention head: softmax(Q K^T / sqrt(d_head)) V with
// K = kv_in W_K, Q = query_in W_Q, V = kv_in W_V.
Matrix attention_head(const Matrix& query_in, const Matrix& kv_in, const Matrix& w_k,
                      const Matrix& w_q, const Matrix& w_v);
inline Matrix attention_head(const Matrix& input, const Matrix& w_k, const Matrix& w_q,
                             const Matrix& w_v) {
  return attention_head(input, input, w_k, w_q, w_v);
}

// Gated linear unit: sigmoid(x W_gate + b_gate) (elementwise) (x W_value + b_value).
class Glu {
 public:
  Glu() = default;
  Glu(std::size_t in, std::size_t out, Rng& rng, const std::string& name);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  ParamList params();

  Dense& gate() { return gate_; }
  Dense& value() { return value_; }

 private:
  Dense gate_;
  Dense value_;
  Matrix gate_out_;
  Matrix value_out_;
  bool recorded_ = false;
};

// Gated residual block: LayerNorm(i + GLU(O1 ELU(O2 i + b2) + b1)).
// Residual width equals input width; `hidden` sizes the inner layers.
class GrnBlock {
 public:
  GrnBlock() = default;
  GrnBlock(std::size_t width, std::size_t hidden, Rng& rng, const std::string& name);

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  ParamList params();

  Dense& inner() { return inner_; }   // O2, b2
  Dense& outer() { return outer_; }   // O1, b1
  Glu& glu() { return glu_; }         // O3, b3 / O4, b4
  LayerNorm& norm() { return norm_; }
  std::size_t width() const { return inner_.in(); }

 private:
  Dense inner_;
  ActivationLayer elu_{Activation::elu};
  Dense outer_;
  Glu glu_;
  LayerNorm norm_;
};

// Recurrent layers over a sequence of batch x features matrices.
class Gru {
 public:
  Gru() = default;
  Gru(std::size_t in, std::size_t hidden, Rng& rng, const std::string& name);

  std::vector<Matrix> forward(const std::vector<Matrix>& xs);
  std::vector<Matrix> backward(const std::vector<Matrix>& dhs);
  ParamList params() { return {&wx_, &wh_, &bx_, &bh_}; }

 private:
  std::size_t hidden_ = 0;
  Param wx_, wh_, bx_, bh_;
  std::vector<Matrix> xs_, hs_, r_, z_, n_, hn_;  // hn_ = h W_hn + b_hn
  bool recorded_ = false;
};

class Lstm {
 public:
  Lstm() = default;
  Lstm(std::size_t in, std::size_t hidden, Rng& rng, const std::string& name);

  std::vector<Matrix> forward(const std::vector<Matrix>& xs);
  std::vector<Matrix> backward(const std::vector<Matrix>& dhs);
  ParamList params() { return {&wx_, &wh_, &b_}; }

 private:
  std::size_t hidden_ = 0;
  Param wx_, wh_, b_;
  std::vector<Matrix> xs_, hs_, cs_, i_, f_, g_, o_, tc_;
  bool recorded_ = false;
};

}  // namespace metahpo
