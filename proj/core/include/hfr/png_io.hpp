#pragma once

#include <string>

#include "hfr/image.hpp"

namespace hfr {

// 8-bit RGB PNG <-> CHW float {3,H,W} in [0,1].
void write_png_rgb8(const std::string& path, const ColorImage& img);
ColorImage read_png_rgb8(const std::string& path);

// 16-bit grayscale PNG. Stored value = round(depth * 65535); value 0 means
// unobserved, so observed pixels are clamped to a stored value of at least 1
// (worst-case quantization shift 1/65535).
void write_png_gray16(const std::string& path, const RangeImage& img);
RangeImage read_png_gray16(const std::string& path);

}  // namespace hfr
