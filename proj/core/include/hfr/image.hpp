#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hfr/errors.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

// Color images are CHW float tensors {3,H,W} with values in [0,1].
using ColorImage = Tensor<float>;

// Single-channel 2.5D depth map on a fixed pixel grid. Masked-out pixels
// carry value 0; observed values live in [0,1].
struct RangeImage {
  Tensor<float> values;  // {H,W}
  Tensor<std::uint8_t> mask;  // {H,W}, 1 = observed

  RangeImage() = default;
  RangeImage(std::size_t h, std::size_t w)
      : values({h, w}), mask({h, w}) {}

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }

  bool observed(std::size_t y, std::size_t x) const {
    return mask.at2(y, x) != 0;
  }

  void validate() const {
    if (values.ndim() != 2 || !std::equal(values.shape().begin(),
                                          values.shape().end(),
                                          mask.shape().begin()))
      throw ShapeError("RangeImage: values/mask shape mismatch");
    for (std::size_t i = 0; i < values.numel(); ++i) {
      float v = values[i];
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw InvalidInputError("RangeImage: value outside [0,1]");
      if (mask[i] == 0 && v != 0.0f)
        throw InvalidInputError("RangeImage: masked-out pixel with nonzero value");
    }
  }
};

}  // namespace hfr
