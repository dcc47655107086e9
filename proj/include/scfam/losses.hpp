#pragma once

// Loss suite: semantic prediction losses, pixel/global domain-adaptation
// losses with optional semantic attention, consistency regularization, and
// the total objective.
//
// Every loss is a positive negative-log-likelihood; probabilities are
// clamped to [eps, 1-eps] before logs. The adversarial min-max is realized
// by the gradient reversal layer on discriminator inputs, so the total
// objective weights the DA block by |lambda1| instead of a negative
// coefficient (the paper's lambda1 = -1 and a GRL are two encodings of the
// same optimization).

#include <cmath>
#include <vector>

#include "scfam/diff/ops.hpp"
#include "scfam/diff/tensor.hpp"

namespace scfam::losses {

using diff::Tensor;

struct LossWeights {
  double lambda1 = -1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double gamma = 5.0;       // focal exponent for the global DA loss
  double eps_clamp = 1e-7;  // probability clamp before logs

  void validate() const {
    if (!(eps_clamp > 0.0 && eps_clamp < 0.5))
      throw std::invalid_argument("LossWeights: eps_clamp must be in (0, 0.5)");
    if (!std::isfinite(gamma) || gamma < 0.0)
      throw std::invalid_argument("LossWeights: gamma must be finite and >= 0");
  }
};

/// Domain label: source = 0, target = 1.
enum class DomainTag : int { kSource = 0, kTarget = 1 };

namespace detail {

/// Elementwise -[t log p + (1-t) log(1-p)] with p clamped to [eps, 1-eps].
inline Tensor bce_map(const Tensor& probs, const Tensor& targets, double eps) {
  diff::detail::check_same_shape("bce", probs, targets);
  const Tensor p = diff::clamp(probs, eps, 1.0 - eps);
  const Tensor pos = diff::mul(targets, diff::log(p));
  const Tensor neg = diff::mul(diff::rsub_scalar(1.0, targets), diff::log(diff::rsub_scalar(1.0, p)));
  return diff::neg(diff::add(pos, neg));
}

inline Tensor constant_like(const Tensor& t, const std::vector<double>& values) {
  return Tensor::from_data(t.shape(), values);
}

}  // namespace detail

/// Local semantic prediction loss: mean BCE over the F1 grid.
/// probs (1,H1,W1) or (H1,W1); target same element count.
inline Tensor loss_spm_local(const Tensor& probs, const Tensor& target,
                             double eps = 1e-7) {
  if (probs.numel() != target.numel())
    throw std::invalid_argument("loss_spm_local: probs " + diff::shape_str(probs.shape()) +
                                " vs target " + diff::shape_str(target.shape()));
  const Tensor p = probs.shape() == target.shape() ? probs : diff::reshape(probs, target.shape());
  return diff::mean(detail::bce_map(p, target, eps));
}

/// Mid semantic prediction loss: sum over classes, mean over positions.
/// probs (K,H2,W2), target (K,H2,W2).
inline Tensor loss_spm_mid(const Tensor& probs, const Tensor& target,
                           double eps = 1e-7) {
  diff::detail::require_rank("loss_spm_mid", probs, 3);
  diff::detail::check_same_shape("loss_spm_mid", probs, target);
  const double positions = static_cast<double>(probs.dim(1)) * probs.dim(2);
  return diff::mul_scalar(diff::sum(detail::bce_map(probs, target, eps)), 1.0 / positions);
}

/// Global semantic prediction loss: sum of per-class BCE (no mean).
inline Tensor loss_spm_global(const Tensor& probs, const Tensor& target,
                              double eps = 1e-7) {
  diff::detail::check_same_shape("loss_spm_global", probs, target);
  return diff::sum(detail::bce_map(probs, target, eps));
}

/// Pixel domain-adaptation loss: mean BCE between the discriminator map and
/// the constant domain label. Shared kernel for the local and mid levels.
inline Tensor loss_da_pixel(const Tensor& d_map, DomainTag d, double eps = 1e-7) {
  const double label = d == DomainTag::kTarget ? 1.0 : 0.0;
  const Tensor target = Tensor::full(d_map.shape(), label);
  return diff::mean(detail::bce_map(d_map, target, eps));
}

/// Pixel DA loss weighted by a per-position attention map; with weights
/// identically 1 this equals loss_da_pixel bit-for-bit.
inline Tensor loss_da_pixel_attended(const Tensor& d_map, DomainTag d,
                                     const Tensor& weight_map, double eps = 1e-7) {
  if (d_map.numel() != weight_map.numel())
    throw std::invalid_argument("loss_da_pixel_attended: map " +
                                diff::shape_str(d_map.shape()) + " vs weights " +
                                diff::shape_str(weight_map.shape()));
  const double label = d == DomainTag::kTarget ? 1.0 : 0.0;
  const Tensor target = Tensor::full(d_map.shape(), label);
  const Tensor w = weight_map.shape() == d_map.shape()
                       ? weight_map
                       : diff::reshape(weight_map, d_map.shape());
  return diff::mean(diff::mul(w, detail::bce_map(d_map, target, eps)));
}

/// Global DA loss, focal-modulated BCE on the scalar discriminator output.
/// gamma = 0 reduces to plain BCE.
inline Tensor loss_da_global(const Tensor& d_global, DomainTag d, double gamma,
                             double eps = 1e-7) {
  if (d_global.numel() != 1)
    throw std::invalid_argument("loss_da_global: discriminator output " +
                                diff::shape_str(d_global.shape()) + " is not scalar");
  const Tensor p = diff::clamp(d_global, eps, 1.0 - eps);
  if (d == DomainTag::kTarget) {
    // (1 - D)^gamma * (-log D)
    return diff::mul(diff::pow_scalar(diff::rsub_scalar(1.0, p), gamma),
                     diff::neg(diff::log(p)));
  }
  // D^gamma * (-log(1 - D))
  return diff::mul(diff::pow_scalar(p, gamma),
                   diff::neg(diff::log(diff::rsub_scalar(1.0, p))));
}

/// Local attention weights 1 + P_l, range [1,2]. Detached: attention shapes
/// the DA loss but sends no gradient back into the semantic head.
inline Tensor attention_weight_local(const Tensor& p_local) {
  return diff::add_scalar(p_local.detached(), 1.0);
}

/// Mid attention weights 2 - max_c P_m, range [1,2]; up-weights positions
/// the semantic head considers background. Detached like the local weights.
inline Tensor attention_weight_mid(const Tensor& p_mid) {
  diff::detail::require_rank("attention_weight_mid", p_mid, 3);
  return diff::rsub_scalar(2.0, diff::channel_max(p_mid.detached()));
}

/// Consistency regularization: pooled mid prediction vs the global
/// prediction. The mid map is mean-pooled to pool_h x pool_w per class, then
/// max-pooled to a K-vector y_m; the loss is sum_c BCE(y_m^c; y_g^c) with
/// the global prediction treated as a fixed (gradient-stopped) target.
inline Tensor loss_consistency(const Tensor& p_mid, const Tensor& y_global,
                               int pool_h, int pool_w, double eps = 1e-7) {
  diff::detail::require_rank("loss_consistency", p_mid, 3);
  const int k = p_mid.dim(0);
  if (y_global.numel() != k)
    throw std::invalid_argument("loss_consistency: mid map " +
                                diff::shape_str(p_mid.shape()) + " vs global " +
                                diff::shape_str(y_global.shape()));
  const Tensor pooled = diff::adaptive_mean_pool(p_mid, pool_h, pool_w);
  const Tensor y_mid = diff::reshape(diff::adaptive_max_pool(pooled, 1, 1), diff::Shape{k});
  const Tensor target = y_global.detached();
  const Tensor p = diff::clamp(y_mid, eps, 1.0 - eps);
  const Tensor pos = diff::mul(target, diff::log(p));
  const Tensor neg = diff::mul(diff::rsub_scalar(1.0, target),
                               diff::log(diff::rsub_scalar(1.0, p)));
  return diff::neg(diff::sum(diff::add(pos, neg)));
}

/// Total objective:
///   L_all = L_det + |lambda1| (L_l + L_m + L_g) + lambda2 (L_Sl + L_Sm + L_Sg)
///           + lambda3 L_CR
/// The |lambda1| stands in for the paper's negative coefficient; the
/// adversarial sign lives in the gradient reversal layer.
inline Tensor total_loss(const Tensor& l_det, const Tensor& l_da_local,
                         const Tensor& l_da_mid, const Tensor& l_da_global,
                         const Tensor& l_spm_local, const Tensor& l_spm_mid,
                         const Tensor& l_spm_global, const Tensor& l_consistency,
                         const LossWeights& weights) {
  weights.validate();
  const double w_da = std::fabs(weights.lambda1);
  Tensor da = diff::add(diff::add(l_da_local, l_da_mid), l_da_global);
  Tensor spm = diff::add(diff::add(l_spm_local, l_spm_mid), l_spm_global);
  Tensor out = diff::add(l_det, diff::mul_scalar(da, w_da));
  out = diff::add(out, diff::mul_scalar(spm, weights.lambda2));
  return diff::add(out, diff::mul_scalar(l_consistency, weights.lambda3));
}

}  // namespace scfam::losses
