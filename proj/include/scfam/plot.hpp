#pragma once

// Minimal line-plot rasterizer. Renders series as polylines with axes and
// tick marks into an RGB buffer and writes PPM. Output depends only on the
// input data, so a plot regenerated from the same CSV is byte-identical.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scfam::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline const double kPalette[8][3] = {
    {0.85, 0.20, 0.20}, {0.15, 0.35, 0.80}, {0.15, 0.65, 0.25}, {0.85, 0.55, 0.10},
    {0.55, 0.25, 0.75}, {0.10, 0.65, 0.65}, {0.75, 0.30, 0.55}, {0.40, 0.40, 0.40},
};

struct Canvas {
  int w, h;
  std::vector<double> rgb;  // interleaved

  Canvas(int width, int height) : w(width), h(height), rgb(static_cast<std::size_t>(width) * height * 3, 1.0) {}

  void put(int x, int y, const double c[3]) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  }

  void line(int x0, int y0, int x1, int y1, const double c[3]) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace detail

/// Renders the series and writes a P6 PPM.
inline void render_lines(const std::vector<Series>& series, const std::string& path,
                         int width = 640, int height = 400) {
  detail::Canvas canvas(width, height);
  const int m = 42;  // margin
  const double axis_color[3] = {0.1, 0.1, 0.1};
  const double grid_color[3] = {0.85, 0.85, 0.85};

  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      } else {
        x_min = std::min(x_min, s.x[i]);
        x_max = std::max(x_max, s.x[i]);
        y_min = std::min(y_min, s.y[i]);
        y_max = std::max(y_max, s.y[i]);
      }
    }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;
  y_max += (y_max - y_min) * 0.05;

  const auto to_px = [&](double x) {
    return m + static_cast<int>((x - x_min) / (x_max - x_min) * (width - 2 * m) + 0.5);
  };
  const auto to_py = [&](double y) {
    return height - m -
           static_cast<int>((y - y_min) / (y_max - y_min) * (height - 2 * m) + 0.5);
  };

  // grid + ticks
  for (int t = 0; t <= 5; ++t) {
    const int gx = m + t * (width - 2 * m) / 5;
    const int gy = height - m - t * (height - 2 * m) / 5;
    canvas.line(gx, m, gx, height - m, grid_color);
    canvas.line(m, gy, width - m, gy, grid_color);
    canvas.line(gx, height - m, gx, height - m + 4, axis_color);
    canvas.line(m - 4, gy, m, gy, axis_color);
  }
  canvas.line(m, height - m, width - m, height - m, axis_color);
  canvas.line(m, m, m, height - m, axis_color);

  int si = 0;
  for (const auto& s : series) {
    const double* color = detail::kPalette[si % 8];
    int px = 0, py = 0;
    bool has_prev = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        has_prev = false;
        continue;
      }
      const int cx = to_px(s.x[i]);
      const int cy = to_py(s.y[i]);
      if (has_prev) canvas.line(px, py, cx, cy, color);
      canvas.put(cx, cy, color);
      px = cx;
      py = cy;
      has_prev = true;
    }
    // legend swatch
    for (int dy = 0; dy < 8; ++dy)
      for (int dx = 0; dx < 8; ++dx)
        canvas.put(width - m - 12 + dx, m + si * 14 + dy, color);
    ++si;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("render_lines: cannot write " + path);
  out << "P6\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(canvas.rgb.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = canvas.rgb[i] * 255.0 + 0.5;
    bytes[i] = v <= 0 ? 0 : (v >= 255 ? 255 : static_cast<std::uint8_t>(v));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace scfam::plot
