#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "preformer/data.hpp"
#include "preformer/tensor.hpp"

namespace preformer::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Worst relative error between backward() and central differences of a
// scalar function over every entry of every input.
inline double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                             std::vector<Tensor> inputs, double h = 1e-6, double floor = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  backward(f(inputs));
  std::vector<Matrix> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad());

  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    Matrix& v = inputs[p].mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + h;
      const double up = f(inputs).item();
      v.data()[i] = saved - h;
      const double down = f(inputs).item();
      v.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(analytic[p].data()[i], numeric, floor));
    }
  }
  return worst;
}

// Random window with the shapes `forward` expects.
inline SeriesWindow random_window(Index input_len, Index pred_len, Index d_x, Index d_y,
                                  Index d_cov, std::mt19937_64& rng) {
  SeriesWindow w;
  w.enc_values = random_matrix(input_len, d_x, rng);
  w.enc_cov = random_matrix(input_len, d_cov, rng, 0.3);
  w.dec_cov = random_matrix(input_len / 2 + pred_len, d_cov, rng, 0.3);
  w.target = random_matrix(pred_len, d_y, rng);
  return w;
}

}  // namespace preformer::testing
