#pragma once

// Forward operations and their reverse closures. Conventions:
//  - feature maps are rank-3 (C,H,W), row-major;
//  - vectors are rank-1, matrices rank-2 (rows,cols);
//  - shape mismatches throw std::invalid_argument naming both shapes;
//  - max-style ops break ties toward the first index in row-major order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scfam/diff/tensor.hpp"

namespace scfam::diff {

namespace detail {

inline void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    std::ostringstream os;
    os << op << ": expected rank-" << rank << " tensor, got " << shape_str(t.shape());
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_op("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *self.parents[static_cast<std::size_t>(p)];
      if (!par.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_op("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_op("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.data[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.data[i];
  });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("div", a, b);
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return detail::make_op("div", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] / pb.data[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] -= self.grad[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return detail::make_op("add_scalar", a.shape(), std::move(out), {a},
                         [](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[i] += self.grad[i];
                         });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return detail::make_op("mul_scalar", a.shape(), std::move(out), {a},
                         [c](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[i] += self.grad[i] * c;
                         });
}

/// c - a, elementwise.
inline Tensor rsub_scalar(double c, const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - a.data()[i];
  return detail::make_op("rsub_scalar", a.shape(), std::move(out), {a},
                         [](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[i] -= self.grad[i];
                         });
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  return detail::make_op("log", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i] / pa.data[i];
  });
}

/// a^p with constant exponent. p == 0 gives exactly 1 with zero gradient.
inline Tensor pow_scalar(const Tensor& a, double p) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (p == 0.0) ? 1.0 : std::pow(a.data()[i], p);
  return detail::make_op("pow_scalar", a.shape(), std::move(out), {a},
                         [p](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad || p == 0.0) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[i] += self.grad[i] * p * std::pow(pa.data[i], p - 1.0);
                         });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return detail::make_op("relu", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (pa.data[i] > 0.0) pa.grad[i] += self.grad[i];
  });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
  return detail::make_op("sigmoid", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.data[i];
      pa.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(std::max(a.data()[i], lo), hi);
  return detail::make_op("clamp", a.shape(), std::move(out), {a},
                         [lo, hi](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             if (pa.data[i] > lo && pa.data[i] < hi)
                               pa.grad[i] += self.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Reductions / shape
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_op("sum", Shape{1}, {acc}, {a}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
  });
}

inline Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double n = static_cast<double>(a.data().size());
  return detail::make_op("mean", Shape{1}, {acc / n}, {a}, [n](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
  });
}

/// Same flat data, new shape; element count must match.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    std::ostringstream os;
    os << "reshape: " << shape_str(a.shape()) << " -> " << shape_str(shape)
       << " changes element count";
    throw std::invalid_argument(os.str());
  }
  return detail::make_op("reshape", std::move(shape), a.data(), {a},
                         [](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[i] += self.grad[i];
                         });
}

/// Channel concatenation of (C_i,H,W) maps.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  for (const auto& p : parts) detail::require_rank("concat_channels", p, 3);
  const int h = parts[0].dim(1);
  const int w = parts[0].dim(2);
  int total_c = 0;
  for (const auto& p : parts) {
    if (p.dim(1) != h || p.dim(2) != w) {
      std::ostringstream os;
      os << "concat_channels: grid mismatch " << shape_str(parts[0].shape())
         << " vs " << shape_str(p.shape());
      throw std::invalid_argument(os.str());
    }
    total_c += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_c) * h * w);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_op("concat_channels", Shape{total_c, h, w}, std::move(out),
                         parts, [](detail::Node& self) {
                           std::size_t offset = 0;
                           for (auto& par : self.parents) {
                             const std::size_t n = par->data.size();
                             if (par->requires_grad)
                               for (std::size_t i = 0; i < n; ++i)
                                 par->grad[i] += self.grad[offset + i];
                             offset += n;
                           }
                         });
}

// ---------------------------------------------------------------------------
// Max-style ops
// ---------------------------------------------------------------------------

/// (K,H,W) -> (H,W): per-position max over channels, first channel wins ties.
inline Tensor channel_max(const Tensor& a) {
  detail::require_rank("channel_max", a, 3);
  const int k = a.dim(0), h = a.dim(1), w = a.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(plane);
  auto argmax = std::make_shared<std::vector<int>>(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    double bv = a.data()[p];
    for (int c = 1; c < k; ++c) {
      const double v = a.data()[static_cast<std::size_t>(c) * plane + p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[p] = bv;
    (*argmax)[p] = best;
  }
  return detail::make_op("channel_max", Shape{h, w}, std::move(out), {a},
                         [argmax, plane](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t p = 0; p < plane; ++p)
                             pa.grad[static_cast<std::size_t>((*argmax)[p]) * plane + p] +=
                                 self.grad[p];
                         });
}

namespace detail {

// Near-equal partition of `n` into `bins` contiguous spans.
inline std::pair<int, int> pool_bin(int i, int n, int bins) {
  return {(i * n) / bins, ((i + 1) * n) / bins};
}

inline void check_pool(const char* op, const Tensor& a, int out_h, int out_w) {
  require_rank(op, a, 3);
  if (out_h < 1 || out_w < 1 || out_h > a.dim(1) || out_w > a.dim(2)) {
    std::ostringstream os;
    os << op << ": output " << out_h << "x" << out_w << " invalid for input "
       << shape_str(a.shape());
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

/// (C,H,W) -> (C,out_h,out_w): mean over near-equal non-overlapping bins.
inline Tensor adaptive_mean_pool(const Tensor& a, int out_h, int out_w) {
  detail::check_pool("adaptive_mean_pool", a, out_h, out_w);
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<double> out(static_cast<std::size_t>(c) * out_h * out_w);
  for (int ch = 0; ch < c; ++ch) {
    const double* src = a.data().data() + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < out_h; ++i) {
      const auto [r0, r1] = detail::pool_bin(i, h, out_h);
      for (int j = 0; j < out_w; ++j) {
        const auto [c0, c1] = detail::pool_bin(j, w, out_w);
        double acc = 0.0;
        for (int r = r0; r < r1; ++r)
          for (int cc = c0; cc < c1; ++cc) acc += src[r * w + cc];
        out[(static_cast<std::size_t>(ch) * out_h + i) * out_w + j] =
            acc / (static_cast<double>(r1 - r0) * (c1 - c0));
      }
    }
  }
  return detail::make_op(
      "adaptive_mean_pool", Shape{c, out_h, out_w}, std::move(out), {a},
      [out_h, out_w, h, w, c](detail::Node& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        for (int ch = 0; ch < c; ++ch) {
          double* gsrc = pa.grad.data() + static_cast<std::size_t>(ch) * h * w;
          for (int i = 0; i < out_h; ++i) {
            const auto [r0, r1] = detail::pool_bin(i, h, out_h);
            for (int j = 0; j < out_w; ++j) {
              const auto [c0, c1] = detail::pool_bin(j, w, out_w);
              const double g =
                  self.grad[(static_cast<std::size_t>(ch) * out_h + i) * out_w + j] /
                  (static_cast<double>(r1 - r0) * (c1 - c0));
              for (int r = r0; r < r1; ++r)
                for (int cc = c0; cc < c1; ++cc) gsrc[r * w + cc] += g;
            }
          }
        }
      });
}

/// (C,H,W) -> (C,out_h,out_w): max over bins; gradient goes to the argmax
/// cell only, ties to the first index in row-major order.
inline Tensor adaptive_max_pool(const Tensor& a, int out_h, int out_w) {
  detail::check_pool("adaptive_max_pool", a, out_h, out_w);
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  std::vector<double> out(static_cast<std::size_t>(c) * out_h * out_w);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = a.data().data() + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < out_h; ++i) {
      const auto [r0, r1] = detail::pool_bin(i, h, out_h);
      for (int j = 0; j < out_w; ++j) {
        const auto [c0, c1] = detail::pool_bin(j, w, out_w);
        double bv = src[r0 * w + c0];
        std::size_t bi = static_cast<std::size_t>(r0) * w + c0;
        for (int r = r0; r < r1; ++r)
          for (int cc = c0; cc < c1; ++cc)
            if (src[r * w + cc] > bv) {
              bv = src[r * w + cc];
              bi = static_cast<std::size_t>(r) * w + cc;
            }
        const std::size_t oi = (static_cast<std::size_t>(ch) * out_h + i) * out_w + j;
        out[oi] = bv;
        (*argmax)[oi] = static_cast<std::size_t>(ch) * h * w + bi;
      }
    }
  }
  return detail::make_op("adaptive_max_pool", Shape{c, out_h, out_w}, std::move(out),
                         {a}, [argmax](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           if (!pa.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             pa.grad[(*argmax)[i]] += self.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear / convolution
// ---------------------------------------------------------------------------

/// x:(N) or (B,N), weight:(M,N), bias:(M) or undefined -> (M) or (B,M).
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank("linear", weight, 2);
  const int m = weight.dim(0), n = weight.dim(1);
  const bool batched = x.rank() == 2;
  if (!batched) detail::require_rank("linear", x, 1);
  const int b = batched ? x.dim(0) : 1;
  const int xn = batched ? x.dim(1) : x.dim(0);
  if (xn != n) {
    std::ostringstream os;
    os << "linear: input " << shape_str(x.shape()) << " incompatible with weight "
       << shape_str(weight.shape());
    throw std::invalid_argument(os.str());
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m))
    throw std::invalid_argument("linear: bias shape " + shape_str(bias.shape()) +
                                " incompatible with weight " + shape_str(weight.shape()));

  std::vector<double> out(static_cast<std::size_t>(b) * m, 0.0);
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  for (int bi = 0; bi < b; ++bi) {
    const double* xr = xd + static_cast<std::size_t>(bi) * n;
    double* orow = out.data() + static_cast<std::size_t>(bi) * m;
    for (int r = 0; r < m; ++r) {
      const double* wr = wd + static_cast<std::size_t>(r) * n;
      double acc = bias.defined() ? bias.data()[static_cast<std::size_t>(r)] : 0.0;
      for (int c = 0; c < n; ++c) acc += wr[c] * xr[c];
      orow[r] = acc;
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const Shape out_shape = batched ? Shape{b, m} : Shape{m};
  return detail::make_op(
      "linear", out_shape, std::move(out), std::move(inputs),
      [b, m, n](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        detail::Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        for (int bi = 0; bi < b; ++bi) {
          const double* g = self.grad.data() + static_cast<std::size_t>(bi) * m;
          const double* xr = px.data.data() + static_cast<std::size_t>(bi) * n;
          double* gx = px.grad.data() + static_cast<std::size_t>(bi) * n;
          for (int r = 0; r < m; ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            const double* wr = pw.data.data() + static_cast<std::size_t>(r) * n;
            if (px.requires_grad)
              for (int c = 0; c < n; ++c) gx[c] += gr * wr[c];
            if (pw.requires_grad) {
              double* gw = pw.grad.data() + static_cast<std::size_t>(r) * n;
              for (int c = 0; c < n; ++c) gw[c] += gr * xr[c];
            }
            if (pb && pb->requires_grad) pb->grad[static_cast<std::size_t>(r)] += gr;
          }
        }
      });
}

/// x:(C,H,W), weight:(F,C,kh,kw), bias:(F) or undefined; square stride and
/// symmetric zero padding -> (F,OH,OW).
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     int stride = 1, int padding = 0) {
  detail::require_rank("conv2d", x, 3);
  detail::require_rank("conv2d", weight, 4);
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int F = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C) {
    std::ostringstream os;
    os << "conv2d: input " << shape_str(x.shape()) << " incompatible with weight "
       << shape_str(weight.shape());
    throw std::invalid_argument(os.str());
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != F))
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                " incompatible with weight " + shape_str(weight.shape()));
  if (stride < 1 || padding < 0)
    throw std::invalid_argument("conv2d: stride must be >=1 and padding >=0");
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  if (H + 2 * padding - kh < 0 || W + 2 * padding - kw < 0)
    throw std::invalid_argument("conv2d: kernel larger than padded input " +
                                shape_str(x.shape()));

  std::vector<double> out(static_cast<std::size_t>(F) * OH * OW, 0.0);
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  for (int f = 0; f < F; ++f) {
    double* oplane = out.data() + static_cast<std::size_t>(f) * OH * OW;
    if (bias.defined()) {
      const double bv = bias.data()[static_cast<std::size_t>(f)];
      std::fill(oplane, oplane + static_cast<std::size_t>(OH) * OW, bv);
    }
    for (int c = 0; c < C; ++c) {
      const double* xplane = xd + static_cast<std::size_t>(c) * H * W;
      const double* wplane = wd + (static_cast<std::size_t>(f) * C + c) * kh * kw;
      for (int ki = 0; ki < kh; ++ki) {
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - padding + ki;
          if (ih < 0 || ih >= H) continue;
          const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
          double* orow = oplane + static_cast<std::size_t>(oh) * OW;
          for (int kj = 0; kj < kw; ++kj) {
            const double wv = wplane[ki * kw + kj];
            if (wv == 0.0) continue;
            // valid ow range so that iw = ow*stride - padding + kj is in [0,W)
            int ow_lo = 0;
            if (padding - kj > 0) ow_lo = (padding - kj + stride - 1) / stride;
            const int hi_num = W - 1 - kj + padding;
            int ow_hi = hi_num < 0 ? -1 : hi_num / stride;  // inclusive
            if (ow_hi > OW - 1) ow_hi = OW - 1;
            const double* xbase = xrow - padding + kj;
            if (stride == 1) {
              for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * xbase[ow];
            } else {
              for (int ow = ow_lo; ow <= ow_hi; ++ow)
                orow[ow] += wv * xbase[static_cast<std::size_t>(ow) * stride];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_op(
      "conv2d", Shape{F, OH, OW}, std::move(out), std::move(inputs),
      [C, H, W, F, kh, kw, OH, OW, stride, padding](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        detail::Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const double* gout = self.grad.data();
        if (pb && pb->requires_grad) {
          for (int f = 0; f < F; ++f) {
            const double* gplane = gout + static_cast<std::size_t>(f) * OH * OW;
            double acc = 0.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
              acc += gplane[i];
            pb->grad[static_cast<std::size_t>(f)] += acc;
          }
        }
        for (int f = 0; f < F; ++f) {
          const double* gplane = gout + static_cast<std::size_t>(f) * OH * OW;
          for (int c = 0; c < C; ++c) {
            const double* xplane = px.data.data() + static_cast<std::size_t>(c) * H * W;
            double* gxplane =
                px.requires_grad ? px.grad.data() + static_cast<std::size_t>(c) * H * W : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(f) * C + c) * kh * kw;
            for (int ki = 0; ki < kh; ++ki) {
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - padding + ki;
                if (ih < 0 || ih >= H) continue;
                const double* grow = gplane + static_cast<std::size_t>(oh) * OW;
                const double* xrow = xplane + static_cast<std::size_t>(ih) * W;
                double* gxrow =
                    gxplane ? gxplane + static_cast<std::size_t>(ih) * W : nullptr;
                for (int kj = 0; kj < kw; ++kj) {
                  int ow_lo = 0;
                  if (padding - kj > 0) ow_lo = (padding - kj + stride - 1) / stride;
                  const int hi_num = W - 1 - kj + padding;
                  int ow_hi = hi_num < 0 ? -1 : hi_num / stride;
                  if (ow_hi > OW - 1) ow_hi = OW - 1;
                  const int off = -padding + kj;
                  if (pw.requires_grad) {
                    double acc = 0.0;
                    for (int ow = ow_lo; ow <= ow_hi; ++ow)
                      acc += grow[ow] * xrow[off + ow * stride];
                    pw.grad[wbase + static_cast<std::size_t>(ki) * kw + kj] += acc;
                  }
                  if (gxrow) {
                    const double wv = pw.data[wbase + static_cast<std::size_t>(ki) * kw + kj];
                    if (wv != 0.0)
                      for (int ow = ow_lo; ow <= ow_hi; ++ow)
                        gxrow[off + ow * stride] += wv * grow[ow];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Special
// ---------------------------------------------------------------------------

/// Identity forward; multiplies the upstream gradient by -1 exactly.
inline Tensor gradient_reversal(const Tensor& x) {
  return detail::make_op("gradient_reversal", x.shape(), x.data(), {x},
                         [](detail::Node& self) {
                           auto& px = *self.parents[0];
                           if (!px.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             px.grad[i] -= self.grad[i];
                         });
}

/// Elementwise smooth-L1 (Huber, delta = 1) of (a - target).
inline Tensor smooth_l1(const Tensor& a, const Tensor& target) {
  detail::check_same_shape("smooth_l1", a, target);
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = a.data()[i] - target.data()[i];
    const double ad = std::fabs(d);
    out[i] = ad < 1.0 ? 0.5 * d * d : ad - 0.5;
  }
  return detail::make_op("smooth_l1", a.shape(), std::move(out), {a, target},
                         [](detail::Node& self) {
                           auto& pa = *self.parents[0];
                           auto& pt = *self.parents[1];
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             const double d = pa.data[i] - pt.data[i];
                             const double dd = d > 1.0 ? 1.0 : (d < -1.0 ? -1.0 : d);
                             if (pa.requires_grad) pa.grad[i] += self.grad[i] * dd;
                             if (pt.requires_grad) pt.grad[i] -= self.grad[i] * dd;
                           }
                         });
}

}  // namespace scfam::diff
