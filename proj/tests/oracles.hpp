#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library code paths they check:
//  - influence_bbox: marks one output unit and propagates which input pixels
//    can affect it, layer by layer, through an all-ones network;
//  - rasterized_semantic_vector: Algorithm-1 labeling by literal pixel
//    counting instead of rectangle arithmetic;
//  - naive_conv2d: direct six-loop convolution;
//  - pooling / BCE loop oracles;
//  - bayes_h_divergence: gridded integration of two known densities.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "scfam/rf_calculus.hpp"
#include "scfam/semantic_labels.hpp"

namespace oracles {

struct Bbox {
  int x0, y0, x1, y1;  // half-open
};

/// Pixels of an H x W image that influence feature (u,v) on the layer-k
/// grid, computed by explicit boolean propagation. Returns the bounding box
/// of the influenced set, or nothing if no pixel influences the feature.
inline std::optional<Bbox> influence_bbox(const scfam::rf::ConvStackSpec& stack,
                                          int k, int u, int v, int image_h,
                                          int image_w) {
  // Grid extents per layer.
  std::vector<int> hs{image_h}, ws{image_w};
  for (int i = 0; i < k; ++i) {
    const auto& l = stack.layers[static_cast<std::size_t>(i)];
    const int nh = hs.back() + 2 * l.padding - l.kernel;
    const int nw = ws.back() + 2 * l.padding - l.kernel;
    hs.push_back(nh < 0 ? 0 : nh / l.stride + 1);
    ws.push_back(nw < 0 ? 0 : nw / l.stride + 1);
  }
  std::vector<std::uint8_t> marked(
      static_cast<std::size_t>(hs[static_cast<std::size_t>(k)]) *
          ws[static_cast<std::size_t>(k)],
      0);
  marked[static_cast<std::size_t>(u) * ws[static_cast<std::size_t>(k)] + v] = 1;

  for (int layer = k; layer >= 1; --layer) {
    const auto& l = stack.layers[static_cast<std::size_t>(layer - 1)];
    const int ph = hs[static_cast<std::size_t>(layer - 1)];
    const int pw = ws[static_cast<std::size_t>(layer - 1)];
    const int ch = hs[static_cast<std::size_t>(layer)];
    const int cw = ws[static_cast<std::size_t>(layer)];
    std::vector<std::uint8_t> prev(static_cast<std::size_t>(ph) * pw, 0);
    for (int r = 0; r < ch; ++r) {
      for (int c = 0; c < cw; ++c) {
        if (!marked[static_cast<std::size_t>(r) * cw + c]) continue;
        for (int kr = 0; kr < l.kernel; ++kr) {
          const int ir = r * l.stride - l.padding + kr;
          if (ir < 0 || ir >= ph) continue;
          for (int kc = 0; kc < l.kernel; ++kc) {
            const int ic = c * l.stride - l.padding + kc;
            if (ic < 0 || ic >= pw) continue;
            prev[static_cast<std::size_t>(ir) * pw + ic] = 1;
          }
        }
      }
    }
    marked = std::move(prev);
  }

  int x0 = image_w, y0 = image_h, x1 = -1, y1 = -1;
  for (int r = 0; r < image_h; ++r)
    for (int c = 0; c < image_w; ++c)
      if (marked[static_cast<std::size_t>(r) * image_w + c]) {
        x0 = std::min(x0, c);
        y0 = std::min(y0, r);
        x1 = std::max(x1, c + 1);
        y1 = std::max(y1, r + 1);
      }
  if (x1 < 0) return std::nullopt;
  return Bbox{x0, y0, x1, y1};
}

/// Algorithm-1 oracle: every area is obtained by counting pixels on a
/// rasterized canvas large enough to hold both rectangles.
inline std::vector<std::uint8_t> rasterized_semantic_vector(
    const std::vector<scfam::labels::Box>& boxes, int num_classes, double zeta,
    const scfam::rf::FieldRect& field) {
  std::vector<std::uint8_t> vec(static_cast<std::size_t>(num_classes), 0);
  for (const auto& b : boxes) {
    long long box_area = 0, inter = 0;
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) {
        ++box_area;
        if (x >= field.x0 && x < field.x1 && y >= field.y0 && y < field.y1) ++inter;
      }
    if (box_area <= 0) continue;
    long long field_area = 0;
    for (int y = field.y0; y < field.y1; ++y)
      for (int x = field.x0; x < field.x1; ++x) ++field_area;
    const double expected =
        static_cast<double>(box_area < field_area ? box_area : field_area);
    if (static_cast<double>(inter) / expected >= zeta)
      vec[static_cast<std::size_t>(b.class_id)] = 1;
  }
  return vec;
}

/// Direct convolution, C,H,W / F,C,kh,kw layouts.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int C,
                                        int H, int W,
                                        const std::vector<double>& w, int F,
                                        int kh, int kw,
                                        const std::vector<double>& bias,
                                        int stride, int padding) {
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(F) * OH * OW, 0.0);
  for (int f = 0; f < F; ++f)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(f)];
        for (int c = 0; c < C; ++c)
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
              const int ih = oh * stride - padding + ki;
              const int iw = ow * stride - padding + kj;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += x[(static_cast<std::size_t>(c) * H + ih) * W + iw] *
                     w[((static_cast<std::size_t>(f) * C + c) * kh + ki) * kw + kj];
            }
        out[(static_cast<std::size_t>(f) * OH + oh) * OW + ow] = acc;
      }
  return out;
}

/// Hand-rolled adaptive mean pool with floor-partition bins.
inline std::vector<double> naive_adaptive_mean_pool(const std::vector<double>& x,
                                                    int C, int H, int W,
                                                    int out_h, int out_w) {
  std::vector<double> out(static_cast<std::size_t>(C) * out_h * out_w, 0.0);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const int r0 = i * H / out_h, r1 = (i + 1) * H / out_h;
        const int c0 = j * W / out_w, c1 = (j + 1) * W / out_w;
        double acc = 0.0;
        for (int r = r0; r < r1; ++r)
          for (int cc = c0; cc < c1; ++cc)
            acc += x[(static_cast<std::size_t>(c) * H + r) * W + cc];
        out[(static_cast<std::size_t>(c) * out_h + i) * out_w + j] =
            acc / ((r1 - r0) * (c1 - c0));
      }
  return out;
}

inline double clamp01(double p, double eps) {
  return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
}

inline double bce_term(double p, double t, double eps = 1e-7) {
  const double q = clamp01(p, eps);
  return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
}

/// Bayes-optimal H-divergence of two known 2-D densities, by integrating on
/// a regular grid: err_S integrates p_S where the optimal rule says target,
/// err_T integrates p_T where it says source.
inline double bayes_h_divergence(const std::function<double(double, double)>& ps,
                                 const std::function<double(double, double)>& pt,
                                 double x0, double x1, double y0, double y1,
                                 int cells) {
  const double dx = (x1 - x0) / cells;
  const double dy = (y1 - y0) / cells;
  double err_s = 0.0, err_t = 0.0;
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      const double x = x0 + (i + 0.5) * dx;
      const double y = y0 + (j + 0.5) * dy;
      const double s = ps(x, y), t = pt(x, y);
      if (t > s)
        err_s += s * dx * dy;
      else
        err_t += t * dx * dy;
    }
  double d = 2.0 * (1.0 - (err_s + err_t));
  if (d < 0.0) d = 0.0;
  if (d > 2.0) d = 2.0;
  return d;
}

inline double gaussian2(double x, double y, double mx, double my, double sx,
                        double sy) {
  const double zx = (x - mx) / sx;
  const double zy = (y - my) / sy;
  return std::exp(-0.5 * (zx * zx + zy * zy)) / (2.0 * 3.14159265358979323846 * sx * sy);
}

}  // namespace oracles
