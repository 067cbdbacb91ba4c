#pragma once

#include <cmath>

#include "hfr/rng.hpp"
#include "hfr/tensor.hpp"

namespace hfr::nn {

template <typename T>
void fill_normal(Tensor<T>& t, double mean, double stddev, Rng& rng) {
  for (auto& v : t.vec()) v = static_cast<T>(rng.normal(mean, stddev));
}

template <typename T>
void fill_he_normal(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  fill_normal(t, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

// Identity plus small symmetry-breaking noise, for square mapping matrices.
template <typename T>
void fill_identity_noise(Tensor<T>& t, double stddev, Rng& rng) {
  const std::size_t n = t.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j)
      t.at2(i, j) = static_cast<T>((i == j ? 1.0 : 0.0) + rng.normal(0.0, stddev));
}

}  // namespace hfr::nn
