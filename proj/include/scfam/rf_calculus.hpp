#pragma once

// Receptive-field arithmetic for stacks of square convolution/pooling layers.
//
// receptive_field_size() follows the recursion
//
//   l_k = l_{k-1} + (f_k - 1) * prod_{i<k} S_i,   l_0 = 1
//
// giving the un-clipped side of the input region feeding one feature at
// layer k. Padding never enters l_k; it only shifts where a footprint lands.
//
// project_field() places the region for a concrete feature position by
// propagating the position's inclusive index interval down through every
// layer, clipping to each layer's valid grid. At interior positions this is
// identical to the accumulated stride/offset center formula; at borders the
// per-grid clipping keeps the result equal to what an influence map reports
// (a final-only clip overshoots when stride floors leave dead pixels at the
// far edge).

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scfam::rf {

struct LayerSpec {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
};

struct ConvStackSpec {
  std::vector<LayerSpec> layers;

  void validate() const {
    if (layers.empty())
      throw std::invalid_argument("ConvStackSpec: layer list is empty");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.kernel < 1 || l.stride < 1 || l.padding < 0) {
        std::ostringstream os;
        os << "ConvStackSpec: layer " << i << " invalid (kernel=" << l.kernel
           << ", stride=" << l.stride << ", padding=" << l.padding << ")";
        throw std::invalid_argument(os.str());
      }
    }
  }

  int depth() const { return static_cast<int>(layers.size()); }
};

/// Image-plane rectangle, half-open: [x0,x1) x [y0,y1), x = column, y = row.
struct FieldRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const {
    return static_cast<long long>(width()) * static_cast<long long>(height());
  }
  bool operator==(const FieldRect&) const = default;
};

struct GridSize {
  int h = 0;
  int w = 0;
};

namespace detail {

inline int layer_output_extent(int input, const LayerSpec& l) {
  const int numer = input + 2 * l.padding - l.kernel;
  if (numer < 0) return 0;
  return numer / l.stride + 1;
}

inline void check_layer_index(const ConvStackSpec& stack, int k) {
  if (k < 1 || k > stack.depth()) {
    std::ostringstream os;
    os << "layer index " << k << " out of range [1, " << stack.depth() << "]";
    throw std::out_of_range(os.str());
  }
}

}  // namespace detail

/// Side length l_k of the (un-clipped) receptive field at layer k, 1-based.
inline long long receptive_field_size(const ConvStackSpec& stack, int k) {
  stack.validate();
  detail::check_layer_index(stack, k);
  long long size = 1;
  long long jump = 1;
  for (int i = 0; i < k; ++i) {
    size += static_cast<long long>(stack.layers[i].kernel - 1) * jump;
    jump *= stack.layers[i].stride;
  }
  return size;
}

/// Feature-grid extent at layer k (1-based) for a given image size.
/// Throws if any layer along the way produces an empty grid.
inline GridSize output_grid(const ConvStackSpec& stack, int k, int image_h,
                            int image_w) {
  stack.validate();
  detail::check_layer_index(stack, k);
  GridSize g{image_h, image_w};
  for (int i = 0; i < k; ++i) {
    g.h = detail::layer_output_extent(g.h, stack.layers[i]);
    g.w = detail::layer_output_extent(g.w, stack.layers[i]);
    if (g.h <= 0 || g.w <= 0) {
      std::ostringstream os;
      os << "image " << image_h << "x" << image_w << " vanishes at layer "
         << (i + 1) << " (grid " << g.h << "x" << g.w << ")";
      throw std::invalid_argument(os.str());
    }
  }
  return g;
}

/// Image-plane footprint of feature (u=row, v=col) on the layer-k grid.
/// The interval is clipped to each intermediate grid, so border footprints
/// match the influence map; interior footprints have side exactly l_k.
inline FieldRect project_field(const ConvStackSpec& stack, int k, int u, int v,
                               int image_h, int image_w) {
  stack.validate();
  detail::check_layer_index(stack, k);

  // Per-layer extents, index 0 = image plane.
  std::vector<int> hs(static_cast<std::size_t>(k) + 1);
  std::vector<int> ws(static_cast<std::size_t>(k) + 1);
  hs[0] = image_h;
  ws[0] = image_w;
  for (int i = 1; i <= k; ++i) {
    hs[i] = detail::layer_output_extent(hs[i - 1], stack.layers[i - 1]);
    ws[i] = detail::layer_output_extent(ws[i - 1], stack.layers[i - 1]);
    if (hs[i] <= 0 || ws[i] <= 0) {
      std::ostringstream os;
      os << "image " << image_h << "x" << image_w << " vanishes at layer " << i;
      throw std::invalid_argument(os.str());
    }
  }
  if (u < 0 || u >= hs[k] || v < 0 || v >= ws[k]) {
    std::ostringstream os;
    os << "position (" << u << "," << v << ") outside layer-" << k << " grid "
       << hs[k] << "x" << ws[k];
    throw std::out_of_range(os.str());
  }

  const auto descend = [&](int pos, const std::vector<int>& extents) {
    int lo = pos;
    int hi = pos;
    for (int i = k; i >= 1; --i) {
      const auto& l = stack.layers[i - 1];
      lo = lo * l.stride - l.padding;
      hi = hi * l.stride - l.padding + l.kernel - 1;
      lo = std::max(lo, 0);
      hi = std::min(hi, extents[i - 1] - 1);
      if (lo > hi)
        throw std::runtime_error(
            "project_field: footprint empty (padding spans the whole window)");
    }
    return std::pair<int, int>{lo, hi};
  };

  const auto [row_lo, row_hi] = descend(u, hs);
  const auto [col_lo, col_hi] = descend(v, ws);
  return FieldRect{col_lo, row_lo, col_hi + 1, row_hi + 1};
}

}  // namespace scfam::rf
