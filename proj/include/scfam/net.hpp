#pragma once

// The SCFAM network at desk scale: a small convolutional backbone with three
// named taps F1/F2/F3, semantic prediction heads at local / mid / global
// granularity, semantic bridge concatenation, three domain discriminators
// behind gradient reversal, and a dense surrogate detection head.
//
// Construction toggles matter for shapes: with the bridge enabled the local
// and mid discriminators see C1+S1 and C2+S2 input channels, without it C1
// and C2. Component weights are initialized from independent seeded streams,
// so flipping one toggle never changes another component's initial weights.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scfam/checkpoint.hpp"
#include "scfam/diff/ops.hpp"
#include "scfam/diff/tensor.hpp"
#include "scfam/rf_calculus.hpp"
#include "scfam/rng.hpp"

namespace scfam::net {

using diff::Tensor;

struct BackboneLayer {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int channels = 8;
};

struct BackboneConfig {
  int image_channels = 3;
  std::vector<BackboneLayer> layers;
  int tap_f1 = 2;  // 1-based layer indices
  int tap_f2 = 4;
  int tap_f3 = 6;

  rf::ConvStackSpec stack() const {
    rf::ConvStackSpec s;
    for (const auto& l : layers) s.layers.push_back({l.kernel, l.stride, l.padding});
    return s;
  }

  int channels_at(int tap) const {
    return layers[static_cast<std::size_t>(tap - 1)].channels;
  }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("BackboneConfig: no layers");
    const int n = static_cast<int>(layers.size());
    if (!(tap_f1 >= 1 && tap_f1 < tap_f2 && tap_f2 < tap_f3 && tap_f3 <= n))
      throw std::invalid_argument("BackboneConfig: taps must satisfy 1 <= F1 < F2 < F3 <= depth");
    stack().validate();
  }
};

struct NetConfig {
  BackboneConfig backbone;
  int num_classes = 3;
  int spm_trunk_depth = 2;  // the N of "N x CR"
  int s1 = 16;              // local penultimate channels
  int s2 = 16;              // mid penultimate channels
  int sg = 16;              // global head trunk width
  int disc_trunk_depth = 2;
  int disc_width = 16;
  int det_width = 32;
  bool with_spm = true;
  bool with_sbc = true;
  bool with_mda = true;

  void validate() const {
    backbone.validate();
    if (num_classes < 1) throw std::invalid_argument("NetConfig: num_classes must be >= 1");
    if (spm_trunk_depth < 1)
      throw std::invalid_argument("NetConfig: spm_trunk_depth must be >= 1");
    if (disc_trunk_depth < 1)
      throw std::invalid_argument("NetConfig: disc_trunk_depth must be >= 1");
    if (with_sbc && !with_spm)
      throw std::invalid_argument("NetConfig: the semantic bridge requires the SPM heads");
  }
};

namespace detail {

inline Tensor kaiming_conv(int out_c, int in_c, int k, Rng& rng) {
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
  std::vector<double> data(static_cast<std::size_t>(out_c) * in_c * k * k);
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data({out_c, in_c, k, k}, std::move(data), true);
}

inline Tensor kaiming_linear(int out_n, int in_n, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_n));
  std::vector<double> data(static_cast<std::size_t>(out_n) * in_n);
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data({out_n, in_n}, std::move(data), true);
}

}  // namespace detail

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1;
  int padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int in_c, int out_c, int kernel, int stride_, int padding_, Rng& rng)
      : w(detail::kaiming_conv(out_c, in_c, kernel, rng)),
        b(Tensor::zeros({out_c}, true)),
        stride(stride_),
        padding(padding_) {}

  Tensor operator()(const Tensor& x) const { return diff::conv2d(x, w, b, stride, padding); }
};

struct LinearLayer {
  Tensor w, b;

  LinearLayer() = default;
  LinearLayer(int in_n, int out_n, Rng& rng)
      : w(detail::kaiming_linear(out_n, in_n, rng)), b(Tensor::zeros({out_n}, true)) {}

  Tensor operator()(const Tensor& x) const { return diff::linear(x, w, b); }
};

/// N x (1x1 conv + ReLU) trunk with a 1x1 projection on top.
struct TrunkHead {
  std::vector<Conv2dLayer> trunk;
  Conv2dLayer proj;

  TrunkHead() = default;
  TrunkHead(int in_c, int width, int depth, int out_c, Rng& rng) {
    int c = in_c;
    for (int i = 0; i < depth; ++i) {
      trunk.emplace_back(c, width, 1, 1, 0, rng);
      c = width;
    }
    proj = Conv2dLayer(c, out_c, 1, 1, 0, rng);
  }

  /// Returns {projection (pre-activation), penultimate trunk feature}.
  std::pair<Tensor, Tensor> operator()(const Tensor& x) const {
    Tensor h = x;
    for (const auto& layer : trunk) h = diff::relu(layer(h));
    return {proj(h), h};
  }
};

struct BackboneTaps {
  Tensor f1, f2, f3;
};

struct SpmOut {
  Tensor p_local;   // (1,H1,W1), sigmoid
  Tensor p_mid;     // (K,H2,W2), sigmoid
  Tensor p_global;  // (K), sigmoid
  Tensor s1_feat;   // (S1,H1,W1) penultimate, feeds the bridge
  Tensor s2_feat;   // (S2,H2,W2)
};

struct DiscOut {
  Tensor d_local;   // (1,H1,W1)
  Tensor d_mid;     // (1,H2,W2)
  Tensor d_global;  // (1)
};

struct DetOut {
  Tensor objectness;  // (1,H3,W3), sigmoid
  Tensor class_map;   // (K,H3,W3), sigmoid
  Tensor box_map;     // (4,H3,W3), linear
};

/// Channel concatenation of a backbone tap with an SPM penultimate feature.
inline Tensor semantic_bridge(const Tensor& feature, const Tensor& spm_penultimate) {
  return diff::concat_channels({feature, spm_penultimate});
}

class ScfamNet {
 public:
  ScfamNet(NetConfig config, std::uint64_t seed) : cfg_(std::move(config)) {
    cfg_.validate();
    const Rng root(seed);

    {
      Rng r = root.child("backbone");
      int in_c = cfg_.backbone.image_channels;
      for (const auto& l : cfg_.backbone.layers) {
        backbone_.emplace_back(in_c, l.channels, l.kernel, l.stride, l.padding, r);
        in_c = l.channels;
      }
    }
    const int c1 = cfg_.backbone.channels_at(cfg_.backbone.tap_f1);
    const int c2 = cfg_.backbone.channels_at(cfg_.backbone.tap_f2);
    const int c3 = cfg_.backbone.channels_at(cfg_.backbone.tap_f3);

    if (cfg_.with_spm) {
      Rng rl = root.child("spm_local");
      spm_local_ = TrunkHead(c1, cfg_.s1, cfg_.spm_trunk_depth, 1, rl);
      Rng rm = root.child("spm_mid");
      spm_mid_ = TrunkHead(c2, cfg_.s2, cfg_.spm_trunk_depth, cfg_.num_classes, rm);
      Rng rg = root.child("spm_global");
      spm_global_trunk_.clear();
      int c = c3;
      for (int i = 0; i < cfg_.spm_trunk_depth; ++i) {
        spm_global_trunk_.emplace_back(c, cfg_.sg, 1, 1, 0, rg);
        c = cfg_.sg;
      }
      spm_global_fc_ = LinearLayer(cfg_.sg, cfg_.num_classes, rg);
    }

    if (cfg_.with_mda) {
      const int in_l = cfg_.with_sbc ? c1 + cfg_.s1 : c1;
      const int in_m = cfg_.with_sbc ? c2 + cfg_.s2 : c2;
      Rng rl = root.child("disc_local");
      disc_local_ = TrunkHead(in_l, cfg_.disc_width, cfg_.disc_trunk_depth, 1, rl);
      Rng rm = root.child("disc_mid");
      disc_mid_ = TrunkHead(in_m, cfg_.disc_width, cfg_.disc_trunk_depth, 1, rm);
      Rng rg = root.child("disc_global");
      disc_global_trunk_.clear();
      int c = c3;
      for (int i = 0; i < cfg_.disc_trunk_depth; ++i) {
        disc_global_trunk_.emplace_back(c, cfg_.disc_width, 1, 1, 0, rg);
        c = cfg_.disc_width;
      }
      disc_global_fc_ = LinearLayer(cfg_.disc_width, 1, rg);
    }

    {
      Rng rd = root.child("det");
      det_trunk_.clear();
      det_trunk_.emplace_back(c3, cfg_.det_width, 1, 1, 0, rd);
      det_trunk_.emplace_back(cfg_.det_width, cfg_.det_width, 1, 1, 0, rd);
      det_obj_ = Conv2dLayer(cfg_.det_width, 1, 1, 1, 0, rd);
      det_cls_ = Conv2dLayer(cfg_.det_width, cfg_.num_classes, 1, 1, 0, rd);
      det_box_ = Conv2dLayer(cfg_.det_width, 4, 1, 1, 0, rd);
    }
  }

  const NetConfig& config() const { return cfg_; }

  BackboneTaps forward_backbone(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != cfg_.backbone.image_channels) {
      throw std::invalid_argument("forward_backbone: image " +
                                  diff::shape_str(image.shape()) + " does not have " +
                                  std::to_string(cfg_.backbone.image_channels) +
                                  " channels");
    }
    BackboneTaps taps;
    Tensor x = image;
    for (std::size_t i = 0; i < backbone_.size(); ++i) {
      x = diff::relu(backbone_[i](x));
      const int layer = static_cast<int>(i) + 1;
      if (layer == cfg_.backbone.tap_f1) taps.f1 = x;
      if (layer == cfg_.backbone.tap_f2) taps.f2 = x;
      if (layer == cfg_.backbone.tap_f3) taps.f3 = x;
    }
    return taps;
  }

  SpmOut forward_spm(const BackboneTaps& taps) const {
    if (!cfg_.with_spm)
      throw std::logic_error("forward_spm: network built without SPM heads");
    SpmOut out;
    auto [l_logits, l_pen] = spm_local_(taps.f1);
    out.p_local = diff::sigmoid(l_logits);
    out.s1_feat = l_pen;
    auto [m_logits, m_pen] = spm_mid_(taps.f2);
    out.p_mid = diff::sigmoid(m_logits);
    out.s2_feat = m_pen;
    Tensor g = taps.f3;
    for (const auto& layer : spm_global_trunk_) g = diff::relu(layer(g));
    g = diff::reshape(diff::adaptive_mean_pool(g, 1, 1), diff::Shape{cfg_.sg});
    out.p_global = diff::sigmoid(spm_global_fc_(g));
    return out;
  }

  /// Discriminator outputs for (optionally bridged) F1/F2 and raw F3. The
  /// gradient reversal layer sits on each input path, inside this call.
  DiscOut forward_discriminators(const Tensor& local_in, const Tensor& mid_in,
                                 const Tensor& f3) const {
    if (!cfg_.with_mda)
      throw std::logic_error("forward_discriminators: network built without MDA");
    DiscOut out;
    out.d_local = diff::sigmoid(disc_local_(diff::gradient_reversal(local_in)).first);
    out.d_mid = diff::sigmoid(disc_mid_(diff::gradient_reversal(mid_in)).first);
    Tensor g = diff::gradient_reversal(f3);
    for (const auto& layer : disc_global_trunk_) g = diff::relu(layer(g));
    g = diff::reshape(diff::adaptive_mean_pool(g, 1, 1), diff::Shape{cfg_.disc_width});
    out.d_global = diff::sigmoid(disc_global_fc_(g));
    return out;
  }

  DetOut forward_det_head(const Tensor& f3) const {
    Tensor h = f3;
    for (const auto& layer : det_trunk_) h = diff::relu(layer(h));
    DetOut out;
    out.objectness = diff::sigmoid(det_obj_(h));
    out.class_map = diff::sigmoid(det_cls_(h));
    out.box_map = det_box_(h);
    return out;
  }

  /// Named parameters in a fixed order (the checkpoint order).
  NamedTensors parameters() const {
    NamedTensors out;
    auto push_conv = [&](const std::string& name, const Conv2dLayer& l) {
      out.emplace_back(name + ".w", l.w);
      out.emplace_back(name + ".b", l.b);
    };
    auto push_head = [&](const std::string& name, const TrunkHead& h) {
      for (std::size_t i = 0; i < h.trunk.size(); ++i)
        push_conv(name + ".trunk" + std::to_string(i), h.trunk[i]);
      push_conv(name + ".proj", h.proj);
    };
    for (std::size_t i = 0; i < backbone_.size(); ++i)
      push_conv("backbone.conv" + std::to_string(i), backbone_[i]);
    if (cfg_.with_spm) {
      push_head("spm.local", spm_local_);
      push_head("spm.mid", spm_mid_);
      for (std::size_t i = 0; i < spm_global_trunk_.size(); ++i)
        push_conv("spm.global.trunk" + std::to_string(i), spm_global_trunk_[i]);
      out.emplace_back("spm.global.fc.w", spm_global_fc_.w);
      out.emplace_back("spm.global.fc.b", spm_global_fc_.b);
    }
    if (cfg_.with_mda) {
      push_head("disc.local", disc_local_);
      push_head("disc.mid", disc_mid_);
      for (std::size_t i = 0; i < disc_global_trunk_.size(); ++i)
        push_conv("disc.global.trunk" + std::to_string(i), disc_global_trunk_[i]);
      out.emplace_back("disc.global.fc.w", disc_global_fc_.w);
      out.emplace_back("disc.global.fc.b", disc_global_fc_.b);
    }
    for (std::size_t i = 0; i < det_trunk_.size(); ++i)
      push_conv("det.trunk" + std::to_string(i), det_trunk_[i]);
    push_conv("det.obj", det_obj_);
    push_conv("det.cls", det_cls_);
    push_conv("det.box", det_box_);
    return out;
  }

  void save(const std::string& path_base) const {
    const NamedTensors params = parameters();
    save_checkpoint(params, path_base);
  }

  void load(const std::string& path_base) {
    NamedTensors params = parameters();
    load_checkpoint(params, path_base);
  }

  /// Input channel count of the local/mid discriminators (shape audit).
  std::pair<int, int> discriminator_in_channels() const {
    if (!cfg_.with_mda) return {0, 0};
    return {disc_local_.trunk.front().w.dim(1), disc_mid_.trunk.front().w.dim(1)};
  }

 private:
  NetConfig cfg_;
  std::vector<Conv2dLayer> backbone_;
  TrunkHead spm_local_, spm_mid_;
  std::vector<Conv2dLayer> spm_global_trunk_;
  LinearLayer spm_global_fc_;
  TrunkHead disc_local_, disc_mid_;
  std::vector<Conv2dLayer> disc_global_trunk_;
  LinearLayer disc_global_fc_;
  std::vector<Conv2dLayer> det_trunk_;
  Conv2dLayer det_obj_, det_cls_, det_box_;
};

}  // namespace scfam::net
