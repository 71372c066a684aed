#pragma once

#include <cmath>

#include "assl/core/rng.hpp"
#include "assl/core/tensor.hpp"

namespace assl::nn {

/// Kaiming-normal, fan-out mode: std = sqrt(2 / (k*k*Cout)).
template <typename T>
Tensor<T> conv_init(int64_t cout, int64_t cin_g, int64_t kh, int64_t kw,
                    Rng& rng) {
  Tensor<T> w({cout, cin_g, kh, kw});
  double stddev = std::sqrt(2.0 / static_cast<double>(kh * kw * cout));
  for (int64_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>(rng.normal(0.0, stddev));
  return w;
}

/// Uniform(-b, b) with b = 1/sqrt(fan_in).
template <typename T>
Tensor<T> linear_init(int64_t dout, int64_t din, Rng& rng) {
  Tensor<T> w({dout, din});
  double bound = 1.0 / std::sqrt(static_cast<double>(din));
  for (int64_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

template <typename T>
Tensor<T> normal_init(std::vector<int64_t> shape, double stddev, Rng& rng) {
  Tensor<T> w(std::move(shape));
  for (int64_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>(rng.normal(0.0, stddev));
  return w;
}

}  // namespace assl::nn
