#include "hfr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hfr/errors.hpp"
#include "hfr/png_io.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

namespace {

// 3x5 glyphs for "0123456789.-", row-major bits.
constexpr std::uint16_t kGlyphs[12] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b000000000000010,  // .
    0b000000111000000,  // -
};

int glyph_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c == '.') return 10;
  if (c == '-') return 11;
  return -1;
}

struct Canvas {
  Tensor<float> img;
  std::size_t w, h;

  Canvas(std::size_t width, std::size_t height)
      : img(Tensor<float>::full({3, height, width}, 1.0f)), w(width), h(height) {}

  void put(long x, long y, const std::array<std::uint8_t, 3>& rgb) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h))
      return;
    for (std::size_t c = 0; c < 3; ++c)
      img.at3(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
          static_cast<float>(rgb[c]) / 255.0f;
  }

  void line(long x0, long y0, long x1, long y1,
            const std::array<std::uint8_t, 3>& rgb) {
    long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      put(x0, y0, rgb);
      if (x0 == x1 && y0 == y1) break;
      long e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void text(long x, long y, const std::string& s,
            const std::array<std::uint8_t, 3>& rgb) {
    for (char ch : s) {
      int gi = glyph_index(ch);
      if (gi >= 0) {
        std::uint16_t bits = kGlyphs[gi];
        for (int ry = 0; ry < 5; ++ry)
          for (int rx = 0; rx < 3; ++rx)
            if (bits & (1u << (14 - (ry * 3 + rx)))) put(x + rx, y + ry, rgb);
      }
      x += 4;
    }
  }
};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2g", v);
  return buf;
}

}  // namespace

void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      std::size_t width, std::size_t height) {
  if (series.empty()) throw InvalidInputError("render_line_plot: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw InvalidInputError("render_line_plot: malformed series");
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (xmax == xmin) { xmax = xmin + 1.0; }
  if (ymax == ymin) { ymax = ymin + 1.0; ymin -= 1.0; }

  Canvas cv(width, height);
  const long mleft = 48, mright = 12, mtop = 12, mbottom = 28;
  const long px0 = mleft, px1 = static_cast<long>(width) - mright;
  const long py0 = static_cast<long>(height) - mbottom, py1 = mtop;
  const std::array<std::uint8_t, 3> axis{40, 40, 40};
  const std::array<std::uint8_t, 3> grid{210, 210, 210};

  auto to_px = [&](double x) {
    return px0 + static_cast<long>(std::lround((x - xmin) / (xmax - xmin) *
                                               static_cast<double>(px1 - px0)));
  };
  auto to_py = [&](double y) {
    return py0 - static_cast<long>(std::lround((y - ymin) / (ymax - ymin) *
                                               static_cast<double>(py0 - py1)));
  };

  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    double fx = xmin + (xmax - xmin) * t / ticks;
    double fy = ymin + (ymax - ymin) * t / ticks;
    cv.line(to_px(fx), py0, to_px(fx), py1, grid);
    cv.line(px0, to_py(fy), px1, to_py(fy), grid);
    cv.text(to_px(fx) - 6, py0 + 6, format_tick(fx), axis);
    cv.text(px0 - 44, to_py(fy) - 2, format_tick(fy), axis);
  }
  cv.line(px0, py0, px1, py0, axis);
  cv.line(px0, py0, px0, py1, axis);

  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
      cv.line(to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]), to_py(s.y[i + 1]),
              s.rgb);
  }
  write_png_rgb8(path, cv.img);
}

}  // namespace hfr
