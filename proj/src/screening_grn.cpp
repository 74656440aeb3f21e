#include "metahpo/screening_grn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "metahpo/adamw.hpp"
#include "metahpo/errors.hpp"
#include "metahpo/text_io.hpp"

namespace metahpo {

// --- gene encoding ---------------------------------------------------------

GeneEncoder::GeneEncoder(const HyperParamSchema& schema) : schema_(schema) {
  const auto& genes = schema_.genes();
  for (std::size_t g = 0; g < genes.size(); ++g) {
    const auto [lo, hi] = std::minmax_element(genes[g].values.begin(), genes[g].values.end());
    lo_.push_back(genes[g].log_scale ? std::log10(*lo) : *lo);
    hi_.push_back(genes[g].log_scale ? std::log10(*hi) : *hi);
    std::vector<double> codes;
    for (double v : genes[g].values) {
      const double width = hi_[g] - lo_[g];
      codes.push_back(width > 0.0 ? (axis(g, v) - lo_[g]) / width : 0.0);
    }
    grid_codes_.push_back(std::move(codes));
  }
}

double GeneEncoder::axis(std::size_t gene, double value) const {
  return schema_.genes()[gene].log_scale ? std::log10(value) : value;
}

std::vector<double> GeneEncoder::encode(const Strategy& s) const {
  schema_.require_valid(s);
  std::vector<double> out(s.genes.size());
  for (std::size_t g = 0; g < s.genes.size(); ++g) out[g] = grid_codes_[g][s.genes[g]];
  return out;
}

Strategy GeneEncoder::nearest(std::span<const double> encoded) const {
  if (encoded.size() != width()) throw ShapeError("nearest: encoding width mismatch");
  Strategy s;
  s.genes.resize(width());
  for (std::size_t g = 0; g < width(); ++g) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid_codes_[g].size(); ++k) {
      if (std::abs(grid_codes_[g][k] - encoded[g]) < std::abs(grid_codes_[g][best] - encoded[g])) best = k;
    }
    s.genes[g] = static_cast<std::uint16_t>(best);
  }
  return s;
}

std::vector<double> encode_strategy(const HyperParamSchema& schema, const Strategy& s) {
  return GeneEncoder(schema).encode(s);
}

// --- configuration ---------------------------------------------------------

ScreenerConfig ScreenerConfig::paper() { return {}; }

ScreenerConfig ScreenerConfig::desk() {
  ScreenerConfig c;
  c.hidden = 32;
  c.batch_size = 64;
  c.epochs = 150;
  c.learning_rate = 3e-3;
  return c;
}

ScreenerConfig ScreenerConfig::preset(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown screener preset '" + std::string(name) + "'");
}

// --- network ---------------------------------------------------------------

ScreenerNet::ScreenerNet(std::size_t features, std::size_t genes, std::size_t hidden,
                         std::uint64_t seed)
    : features_(features), genes_(genes), hidden_(hidden) {
  if (features == 0 || genes == 0 || hidden < 4) {
    throw ConfigError("screener needs features, genes and a hidden width of at least 4");
  }
  Rng rng(seed);
  mfp_transform_ = GrnBlock(features, hidden, rng, "mfp.transform");
  mfp_weight_ = GrnBlock(features, hidden, rng, "mfp.importance");
  gp_in_ = Dense(genes, hidden, rng, "gp.project");
  gp_block_ = GrnBlock(hidden, hidden, rng, "gp.grn");
  fuse_in_ = Dense(features + hidden, hidden, rng, "fusion.project");
  fuse_block_ = GrnBlock(hidden, hidden, rng, "fusion.grn");
  head1_ = Dense(hidden, hidden, rng, "head.fc1");
  head2_ = Dense(hidden, hidden / 4, rng, "head.fc2");
  head3_ = Dense(hidden / 4, 1, rng, "head.out");
}

ParamList ScreenerNet::params() {
  ParamList p = mfp_transform_.params();
  append(p, mfp_weight_.params());
  append(p, gp_in_.params());
  append(p, gp_block_.params());
  append(p, fuse_in_.params());
  append(p, fuse_block_.params());
  append(p, head1_.params());
  append(p, head2_.params());
  append(p, head3_.params());
  return p;
}

Matrix ScreenerNet::forward(const Matrix& features, const Matrix& genes) {
  if (features.cols() != features_ || genes.cols() != genes_ || features.rows() != genes.rows()) {
    throw ShapeError("screener: input shape mismatch");
  }
  transformed_ = mfp_transform_.forward(features);
  importance_ = softmax_.forward(mfp_weight_.forward(features));
  const Matrix mfp = hadamard(transformed_, importance_);
  const Matrix gp = gp_block_.forward(gp_in_.forward(genes));
  const Matrix z = fuse_block_.forward(fuse_in_.forward(hconcat(mfp, gp)));
  recorded_ = true;
  return head3_.forward(relu2_.forward(head2_.forward(relu1_.forward(head1_.forward(z)))));
}

void ScreenerNet::backward(const Matrix& grad_out) {
  if (!recorded_) throw UsageError("screener: backward() without forward()");
  const Matrix dz = head1_.backward(relu1_.backward(head2_.backward(relu2_.backward(head3_.backward(grad_out)))));
  const Matrix dcat = fuse_in_.backward(fuse_block_.backward(dz));
  const Matrix dmfp = dcat.slice_cols(0, features_);
  gp_in_.backward(gp_block_.backward(dcat.slice_cols(features_, hidden_)));
  mfp_transform_.backward(hadamard(dmfp, importance_));
  mfp_weight_.backward(softmax_.backward(hadamard(dmfp, transformed_)));
}

// --- targets and training --------------------------------------------------

TargetTransform TargetTransform::fit(std::span<const double> fitness) {
  TargetTransform t;
  double floor = std::numeric_limits<double>::infinity();
  for (double f : fitness)
    if (f > 0.0) floor = std::min(floor, f);
  if (!std::isfinite(floor)) throw UsageError("target transform needs a positive fitness");
  t.floor = floor;
  double sum = 0.0;
  for (double f : fitness) sum += std::log(std::max(f, floor));
  t.mean = sum / static_cast<double>(fitness.size());
  double var = 0.0;
  for (double f : fitness) var += std::pow(std::log(std::max(f, floor)) - t.mean, 2);
  var /= static_cast<double>(fitness.size());
  t.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return t;
}

double TargetTransform::apply(double fitness) const {
  return (std::log(std::max(fitness, floor)) - mean) / scale;
}

std::vector<double> train_screener(ScreenerNet& net, const ScreenerData& data,
                                   const ScreenerConfig& config) {
  const std::size_t n = data.targets.size();
  if (n == 0) throw UsageError("screener training set is empty");
  if (data.features.rows() != n || data.genes.rows() != n) throw ShapeError("screener data rows differ");
  if (config.batch_size == 0) throw ConfigError("screener batch size must be positive");
  const ParamList params = net.params();
  AdamW optimizer(params, {config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8});
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  curve.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      Matrix f(b, data.features.cols()), g(b, data.genes.cols());
      for (std::size_t i = 0; i < b; ++i) {
        f.set_rows(i, data.features.slice_rows(order[start + i], 1));
        g.set_rows(i, data.genes.slice_rows(order[start + i], 1));
      }
      optimizer.zero_grad();
      const Matrix y = net.forward(f, g);
      Matrix grad(b, 1);
      for (std::size_t i = 0; i < b; ++i) {
        const double err = y[i] - data.targets[order[start + i]];
        total += err * err;
        grad[i] = 2.0 * err / static_cast<double>(b);
      }
      if (!std::isfinite(total)) throw TrainingError("screener loss diverged", epoch);
      net.backward(grad);
      optimizer.step();
    }
    curve.push_back(total / static_cast<double>(n));
  }
  return curve;
}

std::vector<double> predict_scores(ScreenerNet& net, const Matrix& features, const Matrix& genes) {
  const Matrix y = net.forward(features, genes);
  return {y.values().begin(), y.values().end()};
}

void write_loss_curve(std::ostream& out, std::span<const double> losses) {
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e << ',' << format_double(losses[e]) << '\n';
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman needs two equal samples");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// --- surrogates ------------------------------------------------------------

GrnSurrogate::GrnSurrogate(ScreenerNet& net, const HyperParamSchema& schema,
                           std::vector<double> features)
    : net_(&net), encoder_(schema), features_(std::move(features)) {
  if (features_.size() != net.feature_width() || encoder_.width() != net.gene_width()) {
    throw ShapeError("surrogate inputs do not match the screener");
  }
}

std::vector<double> GrnSurrogate::score(std::span<const Strategy> candidates) {
  if (candidates.empty()) return {};
  Matrix f(candidates.size(), features_.size()), g(candidates.size(), encoder_.width());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::copy(features_.begin(), features_.end(), f.row(i).begin());
    const auto e = encoder_.encode(candidates[i]);
    std::copy(e.begin(), e.end(), g.row(i).begin());
  }
  return predict_scores(*net_, f, g);
}

std::vector<double> FunctionSurrogate::score(std::span<const Strategy> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const Strategy& s : candidates) out.push_back(f_(s));
  return out;
}

std::vector<Strategy> screen(Surrogate& surrogate, const HyperParamSchema& schema,
                             std::span<const Strategy> candidates, std::size_t budget) {
  if (budget > candidates.size()) throw ConfigError("screening budget exceeds the offspring count");
  const std::vector<double> scores = surrogate.score(candidates);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> grid_pos(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) grid_pos[i] = schema.grid_index(candidates[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return grid_pos[a] < grid_pos[b];
  });
  std::vector<Strategy> out;
  out.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) out.push_back(candidates[order[i]]);
  return out;
}

}  // namespace metahpo
