#include "metahpo/layers.hpp"

#include <cmath>

#include "metahpo/errors.hpp"

namespace metahpo {

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix glorot(std::size_t in, std::size_t out, Rng& rng) {
  return uniform_init(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

void require_forward(bool recorded, const char* layer) {
  if (!recorded) throw UsageError(std::string(layer) + ": backward() without forward()");
}

Matrix block(const Matrix& m, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  Matrix out(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) out(r, c) = m(r0 + r, c0 + c);
  return out;
}

void put_block(Matrix& m, const Matrix& b, std::size_t r0, std::size_t c0) {
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) m(r0 + r, c0 + c) = b(r, c);
}

Matrix sigmoid_of(const Matrix& x) { return activate(x, Activation::sigmoid); }
Matrix tanh_of(const Matrix& x) { return activate(x, Activation::tanh); }

}  // namespace

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

std::vector<Param*> trainable(const ParamList& params) {
  std::vector<Param*> out;
  for (Param* p : params)
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params)
    if (p->trainable) n += p->value.size();
  return n;
}

void append(ParamList& into, const ParamList& more) {
  into.insert(into.end(), more.begin(), more.end());
}

// --- Dense -----------------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out, Rng& rng, const std::string& name)
    : weight_(name + ".weight", glorot(in, out, rng)), bias_(name + ".bias", Matrix(1, out)) {}

Matrix Dense::forward(const Matrix& x) {
  input_ = x;
  recorded_ = true;
  return add_row_vector(matmul(x, weight_.value), bias_.value);
}

Matrix Dense::backward(const Matrix& dy) {
  require_forward(recorded_, "Dense");
  weight_.grad += matmul_tn(input_, dy);
  bias_.grad += column_sums(dy);
  return matmul_nt(dy, weight_.value);
}

// --- ActivationLayer -------------------------------------------------------

Matrix ActivationLayer::forward(const Matrix& x) {
  input_ = x;
  output_ = activate(x, kind_);
  recorded_ = true;
  return output_;
}

Matrix ActivationLayer::backward(const Matrix& dy) {
  require_forward(recorded_, "Activation");
  return activate_backward(input_, output_, dy, kind_);
}

// --- LayerNorm -------------------------------------------------------------

LayerNorm::LayerNorm(std::size_t width, const std::string& name)
    : gain_(name + ".gain", Matrix(1, width, 1.0)), bias_(name + ".bias", Matrix(1, width)) {}

Matrix LayerNorm::forward(const Matrix& x) {
  if (x.cols() != gain_.value.cols()) throw ShapeError("LayerNorm: width mismatch");
  const std::size_t n = x.cols();
  normalized_ = Matrix(x.rows(), n);
  inv_std_.assign(x.rows(), 0.0);
  Matrix y(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (xr[c] - mean) * inv;
      normalized_(r, c) = xhat;
      y(r, c) = xhat * gain_.value[c] + bias_.value[c];
    }
  }
  recorded_ = true;
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy) {
  require_forward(recorded_, "LayerNorm");
  const std::size_t n = dy.cols();
  Matrix dx(dy.rows(), n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double g = dy(r, c) * gain_.value[c];
      gain_.grad[c] += dy(r, c) * normalized_(r, c);
      bias_.grad[c] += dy(r, c);
      mean_g += g;
      mean_gx += g * normalized_(r, c);
    }
    mean_g /= static_cast<double>(n);
    mean_gx /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) {
      const double g = dy(r, c) * gain_.value[c];
      dx(r, c) = inv_std_[r] * (g - mean_g - normalized_(r, c) * mean_gx);
    }
  }
  return dx;
}

// --- BatchNorm -------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t width, const std::string& name)
    : gain_(name + ".gain", Matrix(1, width, 1.0)),
      bias_(name + ".bias", Matrix(1, width)),
      running_mean_(name + ".running_mean", Matrix(1, width), false),
      running_var_(name + ".running_var", Matrix(1, width, 1.0), false) {}

Matrix BatchNorm::forward(const Matrix& x, bool training) {
  const std::size_t n = x.cols();
  if (n != gain_.value.cols()) throw ShapeError("BatchNorm: width mismatch");
  const std::size_t m = x.rows();
  training_ = training;
  normalized_ = Matrix(m, n);
  inv_std_.assign(n, 0.0);
  Matrix y(m, n);
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (training) {
      for (std::size_t r = 0; r < m; ++r) mean += x(r, c);
      mean /= static_cast<double>(m);
      for (std::size_t r = 0; r < m; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
      var /= static_cast<double>(m);
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean_.value[c] = kMomentum * running_mean_.value[c] + (1.0 - kMomentum) * mean;
      running_var_.value[c] = kMomentum * running_var_.value[c] + (1.0 - kMomentum) * unbiased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_[c] = inv;
    for (std::size_t r = 0; r < m; ++r) {
      const double xhat = (x(r, c) - mean) * inv;
      normalized_(r, c) = xhat;
      y(r, c) = xhat * gain_.value[c] + bias_.value[c];
    }
  }
  recorded_ = true;
  return y;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  require_forward(recorded_, "BatchNorm");
  const std::size_t m = dy.rows();
  const std::size_t n = dy.cols();
  Matrix dx(m, n);
  for (std::size_t c = 0; c < n; ++c) {
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double g = dy(r, c) * gain_.value[c];
      gain_.grad[c] += dy(r, c) * normalized_(r, c);
      bias_.grad[c] += dy(r, c);
      mean_g += g;
      mean_gx += g * normalized_(r, c);
    }
    mean_g /= static_cast<double>(m);
    mean_gx /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      const double g = dy(r, c) * gain_.value[c];
      dx(r, c) = training_ ? inv_std_[c] * (g - mean_g - normalized_(r, c) * mean_gx)
                           : inv_std_[c] * g;
    }
  }
  return dx;
}

// --- Attention -------------------------------------------------------------

Matrix attention_head(const Matrix& query_in, const Matrix& kv_in, const Matrix& w_k,
                      const Matrix& w_q, const Matrix& w_v) {
  const Matrix k = matmul(kv_in, w_k);
  const Matrix q = matmul(query_in, w_q);
  const Matrix v = matmul(kv_in, w_v);
  Matrix scores = matmul_nt(q, k) * (1.0 / std::sqrt(static_cast<double>(w_q.cols())));
  return matmul(activate(scores, Activation::softmax_rowwise), v);
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads,
                                       std::size_t seq_len, Rng& rng, const std::string& name)
    : d_model_(d_model), heads_(heads), seq_len_(seq_len),
      wq_(name + ".w_q", glorot(d_model, d_model, rng)),
      wk_(name + ".w_k", glorot(d_model, d_model, rng)),
      wv_(name + ".w_v", glorot(d_model, d_model, rng)),
      wo_(name + ".w_o", glorot(d_model, d_model, rng)),
      bo_(name + ".b_o", Matrix(1, d_model)) {
  if (heads == 0 || d_model % heads != 0) {
    throw ShapeError("MultiHeadAttention: heads must divide d_model");
  }
}

const Matrix& MultiHeadAttention::weights(std::size_t b, std::size_t h) const {
  return attn_.at(b * heads_ + h);
}

Matrix MultiHeadAttention::forward(const Matrix& query_in, const Matrix& kv_in) {
  if (query_in.cols() != d_model_ || kv_in.cols() != d_model_ ||
      query_in.rows() != kv_in.rows() || query_in.rows() % seq_len_ != 0) {
    throw ShapeError("MultiHeadAttention: input shape mismatch");
  }
  query_in_ = query_in;
  kv_in_ = kv_in;
  q_ = matmul(query_in, wq_.value);
  k_ = matmul(kv_in, wk_.value);
  v_ = matmul(kv_in, wv_.value);
  const std::size_t batch = query_in.rows() / seq_len_;
  const std::size_t dh = d_model_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  concat_ = Matrix(query_in.rows(), d_model_);
  attn_.assign(batch * heads_, Matrix());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const Matrix qb = block(q_, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix kb = block(k_, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix vb = block(v_, b * seq_len_, seq_len_, h * dh, dh);
      Matrix a = activate(matmul_nt(qb, kb) * scale, Activation::softmax_rowwise);
      put_block(concat_, matmul(a, vb), b * seq_len_, h * dh);
      attn_[b * heads_ + h] = std::move(a);
    }
  }
  recorded_ = true;
  return add_row_vector(matmul(concat_, wo_.value), bo_.value);
}

std::pair<Matrix, Matrix> MultiHeadAttention::backward(const Matrix& dy) {
  require_forward(recorded_, "MultiHeadAttention");
  wo_.grad += matmul_tn(concat_, dy);
  bo_.grad += column_sums(dy);
  const Matrix dconcat = matmul_nt(dy, wo_.value);
  const std::size_t batch = dy.rows() / seq_len_;
  const std::size_t dh = d_model_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(dy.rows(), d_model_), dk(dy.rows(), d_model_), dv(dy.rows(), d_model_);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const Matrix& a = attn_[b * heads_ + h];
      const Matrix qb = block(q_, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix kb = block(k_, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix vb = block(v_, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix dout = block(dconcat, b * seq_len_, seq_len_, h * dh, dh);
      const Matrix da = matmul_nt(dout, vb);
      const Matrix dscores =
          activate_backward(a, a, da, Activation::softmax_rowwise) * scale;
      put_block(dv, matmul_tn(a, dout), b * seq_len_, h * dh);
      put_block(dq, matmul(dscores, kb), b * seq_len_, h * dh);
      put_block(dk, matmul_tn(dscores, qb), b * seq_len_, h * dh);
    }
  }
  wq_.grad += matmul_tn(query_in_, dq);
  wk_.grad += matmul_tn(kv_in_, dk);
  wv_.grad += matmul_tn(kv_in_, dv);
  Matrix dquery = matmul_nt(dq, wq_.value);
  Matrix dkv = matmul_nt(dk, wk_.value) + matmul_nt(dv, wv_.value);
  return {std::move(dquery), std::move(dkv)};
}

// --- GLU / GRN -------------------------------------------------------------

Glu::Glu(std::size_t in, std::size_t out, Rng& rng, const std::string& name)
    : gate_(in, out, rng, name + ".gate"), value_(in, out, rng, name + ".value") {}

ParamList Glu::params() {
  ParamList p = gate_.params();
  append(p, value_.params());
  return p;
}

Matrix Glu::forward(const Matrix& x) {
  gate_out_ = sigmoid_of(gate_.forward(x));
  value_out_ = value_.forward(x);
  recorded_ = true;
  return hadamard(gate_out_, value_out_);
}

Matrix Glu::backward(const Matrix& dy) {
  require_forward(recorded_, "Glu");
  Matrix dgate(dy.rows(), dy.cols());
  Matrix dvalue(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double g = gate_out_[i];
    dvalue[i] = dy[i] * g;
    dgate[i] = dy[i] * value_out_[i] * g * (1.0 - g);
  }
  return gate_.backward(dgate) + value_.backward(dvalue);
}

GrnBlock::GrnBlock(std::size_t width, std::size_t hidden, Rng& rng, const std::string& name)
    : inner_(width, hidden, rng, name + ".o2"),
      outer_(hidden, hidden, rng, name + ".o1"),
      glu_(hidden, width, rng, name + ".glu"),
      norm_(width, name + ".norm") {}

ParamList GrnBlock::params() {
  ParamList p = inner_.params();
  append(p, outer_.params());
  append(p, glu_.params());
  append(p, norm_.params());
  return p;
}

Matrix GrnBlock::forward(const Matrix& x) {
  const Matrix eta2 = elu_.forward(inner_.forward(x));
  const Matrix eta1 = outer_.forward(eta2);
  return norm_.forward(x + glu_.forward(eta1));
}

Matrix GrnBlock::backward(const Matrix& dy) {
  const Matrix dsum = norm_.backward(dy);
  const Matrix deta1 = glu_.backward(dsum);
  const Matrix deta2 = outer_.backward(deta1);
  return dsum + inner_.backward(elu_.backward(deta2));
}

// --- GRU -------------------------------------------------------------------

Gru::Gru(std::size_t in, std::size_t hidden, Rng& rng, const std::string& name)
    : hidden_(hidden) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx_ = Param(name + ".w_x", uniform_init(in, 3 * hidden, limit, rng));
  wh_ = Param(name + ".w_h", uniform_init(hidden, 3 * hidden, limit, rng));
  bx_ = Param(name + ".b_x", uniform_init(1, 3 * hidden, limit, rng));
  bh_ = Param(name + ".b_h", uniform_init(1, 3 * hidden, limit, rng));
}

std::vector<Matrix> Gru::forward(const std::vector<Matrix>& xs) {
  const std::size_t steps = xs.size();
  const std::size_t batch = steps ? xs.front().rows() : 0;
  const std::size_t h = hidden_;
  xs_ = xs;
  hs_.assign(1, Matrix(batch, h));
  r_.clear(); z_.clear(); n_.clear(); hn_.clear();
  std::vector<Matrix> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix gx = add_row_vector(matmul(xs[t], wx_.value), bx_.value);
    const Matrix gh = add_row_vector(matmul(hs_.back(), wh_.value), bh_.value);
    Matrix r = sigmoid_of(gx.slice_cols(0, h) + gh.slice_cols(0, h));
    Matrix z = sigmoid_of(gx.slice_cols(h, h) + gh.slice_cols(h, h));
    Matrix hn = gh.slice_cols(2 * h, h);
    Matrix n = tanh_of(gx.slice_cols(2 * h, h) + hadamard(r, hn));
    Matrix next(batch, h);
    const Matrix& prev = hs_.back();
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = (1.0 - z[i]) * n[i] + z[i] * prev[i];
    r_.push_back(std::move(r));
    z_.push_back(std::move(z));
    n_.push_back(std::move(n));
    hn_.push_back(std::move(hn));
    hs_.push_back(next);
    outputs.push_back(std::move(next));
  }
  recorded_ = true;
  return outputs;
}

std::vector<Matrix> Gru::backward(const std::vector<Matrix>& dhs) {
  require_forward(recorded_, "Gru");
  if (dhs.size() != xs_.size()) throw ShapeError("Gru: gradient sequence length mismatch");
  const std::size_t h = hidden_;
  const std::size_t steps = xs_.size();
  std::vector<Matrix> dxs(steps);
  Matrix carry = steps ? Matrix(dhs.front().rows(), h) : Matrix();
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix dh = dhs[t] + carry;
    const Matrix& prev = hs_[t];
    const Matrix& r = r_[t];
    const Matrix& z = z_[t];
    const Matrix& n = n_[t];
    const Matrix& hn = hn_[t];
    const std::size_t batch = dh.rows();
    Matrix dgx(batch, 3 * h), dgh(batch, 3 * h);
    Matrix dprev(batch, h);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < h; ++j) {
        const double g = dh(b, j);
        const double dn_pre = g * (1.0 - z(b, j)) * (1.0 - n(b, j) * n(b, j));
        const double dz_pre = g * (prev(b, j) - n(b, j)) * z(b, j) * (1.0 - z(b, j));
        const double dr_pre = dn_pre * hn(b, j) * r(b, j) * (1.0 - r(b, j));
        dprev(b, j) = g * z(b, j);
        dgx(b, j) = dr_pre;
        dgx(b, h + j) = dz_pre;
        dgx(b, 2 * h + j) = dn_pre;
        dgh(b, j) = dr_pre;
        dgh(b, h + j) = dz_pre;
        dgh(b, 2 * h + j) = dn_pre * r(b, j);
      }
    }
    wx_.grad += matmul_tn(xs_[t], dgx);
    bx_.grad += column_sums(dgx);
    wh_.grad += matmul_tn(prev, dgh);
    bh_.grad += column_sums(dgh);
    dxs[t] = matmul_nt(dgx, wx_.value);
    carry = dprev + matmul_nt(dgh, wh_.value);
  }
  return dxs;
}

// --- LSTM ------------------------------------------------------------------

Lstm::Lstm(std::size_t in, std::size_t hidden, Rng& rng, const std::string& name)
    : hidden_(hidden) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx_ = Param(name + ".w_x", uniform_init(in, 4 * hidden, limit, rng));
  wh_ = Param(name + ".w_h", uniform_init(hidden, 4 * hidden, limit, rng));
  Matrix bias(1, 4 * hidden);
  for (std::size_t j = 0; j < hidden; ++j) bias[hidden + j] = 1.0;  // forget gate
  b_ = Param(name + ".b", std::move(bias));
}

std::vector<Matrix> Lstm::forward(const std::vector<Matrix>& xs) {
  const std::size_t steps = xs.size();
  const std::size_t batch = steps ? xs.front().rows() : 0;
  const std::size_t h = hidden_;
  xs_ = xs;
  hs_.assign(1, Matrix(batch, h));
  cs_.assign(1, Matrix(batch, h));
  i_.clear(); f_.clear(); g_.clear(); o_.clear(); tc_.clear();
  std::vector<Matrix> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix pre = add_row_vector(matmul(xs[t], wx_.value) + matmul(hs_.back(), wh_.value),
                                      b_.value);
    Matrix ig = sigmoid_of(pre.slice_cols(0, h));
    Matrix fg = sigmoid_of(pre.slice_cols(h, h));
    Matrix gg = tanh_of(pre.slice_cols(2 * h, h));
    Matrix og = sigmoid_of(pre.slice_cols(3 * h, h));
    Matrix c = hadamard(fg, cs_.back()) + hadamard(ig, gg);
    Matrix tc = tanh_of(c);
    Matrix next = hadamard(og, tc);
    i_.push_back(std::move(ig));
    f_.push_back(std::move(fg));
    g_.push_back(std::move(gg));
    o_.push_back(std::move(og));
    tc_.push_back(std::move(tc));
    cs_.push_back(std::move(c));
    hs_.push_back(next);
    outputs.push_back(std::move(next));
  }
  recorded_ = true;
  return outputs;
}

std::vector<Matrix> Lstm::backward(const std::vector<Matrix>& dhs) {
  require_forward(recorded_, "Lstm");
  if (dhs.size() != xs_.size()) throw ShapeError("Lstm: gradient sequence length mismatch");
  const std::size_t h = hidden_;
  const std::size_t steps = xs_.size();
  std::vector<Matrix> dxs(steps);
  Matrix carry_h = steps ? Matrix(dhs.front().rows(), h) : Matrix();
  Matrix carry_c = carry_h;
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix dh = dhs[t] + carry_h;
    const std::size_t batch = dh.rows();
    Matrix dpre(batch, 4 * h);
    Matrix dc_prev(batch, h);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = i_[t](b, j), fg = f_[t](b, j), gg = g_[t](b, j), og = o_[t](b, j);
        const double tc = tc_[t](b, j);
        const double dc = carry_c(b, j) + dh(b, j) * og * (1.0 - tc * tc);
        dpre(b, j) = dc * gg * ig * (1.0 - ig);
        dpre(b, h + j) = dc * cs_[t](b, j) * fg * (1.0 - fg);
        dpre(b, 2 * h + j) = dc * ig * (1.0 - gg * gg);
        dpre(b, 3 * h + j) = dh(b, j) * tc * og * (1.0 - og);
        dc_prev(b, j) = dc * fg;
      }
    }
    wx_.grad += matmul_tn(xs_[t], dpre);
    wh_.grad += matmul_tn(hs_[t], dpre);
    b_.grad += column_sums(dpre);
    dxs[t] = matmul_nt(dpre, wx_.value);
    carry_h = matmul_nt(dpre, wh_.value);
    carry_c = std::move(dc_prev);
  }
  return dxs;
}

}  // namespace metahpo
