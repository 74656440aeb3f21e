#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "metahpo/layers.hpp"
#include "metahpo/tensor.hpp"

namespace metahpo::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

// Weighted sum of a layer output; the weights make every output entry matter.
inline double projected_loss(const Matrix& y, const Matrix& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

struct Probe {
  std::string name;
  Matrix* value;
  Matrix analytic;
};

struct GradCheck {
  double max_relative_error = 0.0;
  std::string worst;
};

// Central differences with step h. Relative error per tensor is
// |analytic - numeric| / (|analytic| + |numeric|) in the Euclidean norm.
// A gradient that vanishes identically (a bias feeding batch norm) leaves
// only round-off of about 1e-10 in the numeric estimate, so below a norm of
// 1e-7 the absolute difference is reported instead.
inline GradCheck check_gradients(std::vector<Probe>& probes, const std::function<double()>& loss,
                                 double h = 1e-5) {
  GradCheck result;
  for (Probe& p : probes) {
    Matrix numeric(p.value->rows(), p.value->cols());
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double saved = (*p.value)[i];
      (*p.value)[i] = saved + h;
      const double up = loss();
      (*p.value)[i] = saved - h;
      const double down = loss();
      (*p.value)[i] = saved;
      numeric[i] = (up - down) / (2 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (p.analytic[i] - numeric[i]) * (p.analytic[i] - numeric[i]);
      na += p.analytic[i] * p.analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    const double rel = denom < 1e-7 ? std::sqrt(diff) : std::sqrt(diff) / denom;
    if (rel > result.max_relative_error || result.worst.empty()) {
      if (rel >= result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = p.name;
      }
    }
  }
  return result;
}

// Probes for every trainable parameter, using the gradients already
// accumulated in the params.
inline std::vector<Probe> param_probes(const ParamList& params) {
  std::vector<Probe> probes;
  for (Param* p : params) {
    if (p->trainable) probes.push_back({p->name, &p->value, p->grad});
  }
  return probes;
}

}  // namespace metahpo::testing
