#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hfr {

struct PlotSeries {
  std::vector<double> x, y;
  std::array<std::uint8_t, 3> rgb{30, 80, 200};
};

// Minimal raster line plot (grid, ticks with numeric labels, polylines),
// written as an 8-bit RGB PNG. Enough for CMC and loss curves.
void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      std::size_t width = 640, std::size_t height = 420);

}  // namespace hfr
