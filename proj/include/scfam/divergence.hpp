#pragma once

// Empirical H-divergence and Mixed-Class H-divergence over labeled feature
// samples.
//
// d_H(S,T) = 2 [1 - min_eta (err_S(eta) + err_T(eta))] is estimated by
// training a small MLP domain classifier on half the samples and measuring
// both error rates on the held-out half; the min over the hypothesis class
// is approximated by random restarts. The mixed-class variant runs the same
// estimator once per observed class subset (singletons and mixtures alike)
// and sums the terms. Subsets are enumerated from the data, never from the
// 2^K expansion.
//
// Estimates are order-invariant: samples are canonically sorted before the
// deterministic train/eval split, and all training randomness comes from the
// config seed.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfam/diff/ops.hpp"
#include "scfam/diff/tensor.hpp"
#include "scfam/rng.hpp"

namespace scfam::divergence {

using diff::Tensor;

struct TrainerConfig {
  int hidden = 12;
  int epochs = 350;
  double lr = 0.2;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  int restarts = 3;
  std::uint64_t seed = 1234;
  int min_per_domain = 8;

  void validate() const {
    if (hidden < 1 || epochs < 1 || restarts < 1 || min_per_domain < 2)
      throw std::invalid_argument("TrainerConfig: degenerate settings");
  }
};

struct FeatureSample {
  std::vector<double> vector;
  std::vector<int> subset;  // observed class subset, sorted ascending
  int domain = 0;           // 0 = source, 1 = target
};

struct DomainFeatureSet {
  std::vector<FeatureSample> samples;

  void validate() const {
    if (samples.empty()) return;
    const std::size_t dim = samples.front().vector.size();
    for (const auto& s : samples) {
      if (s.vector.size() != dim)
        throw std::invalid_argument("DomainFeatureSet: inconsistent feature dimension");
      if (s.domain != 0 && s.domain != 1)
        throw std::invalid_argument("DomainFeatureSet: domain must be 0 or 1");
    }
  }
};

struct SubsetTerm {
  std::vector<int> subset;
  double d_h = 0.0;
  bool estimable = false;
  int n_source = 0;
  int n_target = 0;
};

struct DivergenceReport {
  std::vector<SubsetTerm> per_subset;
  double total = 0.0;  // exact sum of the estimable terms
};

inline std::string subset_name(const std::vector<int>& subset) {
  std::string out;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) out += "+";
    out += std::to_string(subset[i]);
  }
  return out.empty() ? "(empty)" : out;
}

namespace detail {

inline void sort_canonical(std::vector<std::vector<double>>& feats) {
  std::sort(feats.begin(), feats.end());
}

/// Deterministic stratified 50/50 split: canonical order, alternate indices.
inline void split_half(const std::vector<std::vector<double>>& feats,
                       std::vector<std::vector<double>>& train,
                       std::vector<std::vector<double>>& eval) {
  for (std::size_t i = 0; i < feats.size(); ++i)
    (i % 2 == 0 ? train : eval).push_back(feats[i]);
}

struct Mlp {
  Tensor w1, b1, w2, b2;

  Mlp(int in_dim, int hidden, Rng& rng) {
    const double bound1 = std::sqrt(6.0 / in_dim);
    const double bound2 = std::sqrt(6.0 / hidden);
    std::vector<double> v1(static_cast<std::size_t>(hidden) * in_dim);
    for (auto& v : v1) v = rng.uniform(-bound1, bound1);
    std::vector<double> v2(static_cast<std::size_t>(hidden));
    for (auto& v : v2) v = rng.uniform(-bound2, bound2);
    w1 = Tensor::from_data({hidden, in_dim}, std::move(v1), true);
    b1 = Tensor::zeros({hidden}, true);
    w2 = Tensor::from_data({1, hidden}, std::move(v2), true);
    b2 = Tensor::zeros({1}, true);
  }

  Tensor probs(const Tensor& x) const {
    return diff::sigmoid(diff::linear(diff::relu(diff::linear(x, w1, b1)), w2, b2));
  }
};

}  // namespace detail

/// Estimated H-divergence between two feature samples, in [0, 2].
inline double estimate_h_divergence(const std::vector<std::vector<double>>& source,
                                    const std::vector<std::vector<double>>& target,
                                    const TrainerConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(source.size()) < cfg.min_per_domain ||
      static_cast<int>(target.size()) < cfg.min_per_domain) {
    std::ostringstream os;
    os << "estimate_h_divergence: need at least " << cfg.min_per_domain
       << " samples per domain (got " << source.size() << " source, "
       << target.size() << " target)";
    throw std::invalid_argument(os.str());
  }
  const std::size_t dim = source.front().size();
  for (const auto& v : target)
    if (v.size() != dim)
      throw std::invalid_argument("estimate_h_divergence: feature dimension mismatch");

  std::vector<std::vector<double>> s_sorted = source;
  std::vector<std::vector<double>> t_sorted = target;
  detail::sort_canonical(s_sorted);
  detail::sort_canonical(t_sorted);

  std::vector<std::vector<double>> s_train, s_eval, t_train, t_eval;
  detail::split_half(s_sorted, s_train, s_eval);
  detail::split_half(t_sorted, t_train, t_eval);

  // Standardize with train statistics.
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  const double n_train = static_cast<double>(s_train.size() + t_train.size());
  for (const auto* set : {&s_train, &t_train})
    for (const auto& v : *set)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
  for (auto& m : mean) m /= n_train;
  for (const auto* set : {&s_train, &t_train})
    for (const auto& v : *set)
      for (std::size_t d = 0; d < dim; ++d) {
        const double z = v[d] - mean[d];
        sd[d] += z * z;
      }
  for (auto& s : sd) s = std::sqrt(s / n_train) + 1e-9;

  auto pack = [&](const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b) {
    std::vector<double> flat;
    flat.reserve((a.size() + b.size()) * dim);
    for (const auto* set : {&a, &b})
      for (const auto& v : *set)
        for (std::size_t d = 0; d < dim; ++d) flat.push_back((v[d] - mean[d]) / sd[d]);
    return Tensor::from_data({static_cast<int>(a.size() + b.size()), static_cast<int>(dim)},
                             std::move(flat));
  };
  const Tensor x_train = pack(s_train, t_train);
  const Tensor x_eval = pack(s_eval, t_eval);
  std::vector<double> labels(s_train.size(), 0.0);
  labels.insert(labels.end(), t_train.size(), 1.0);
  const int n_labeled = static_cast<int>(labels.size());
  const Tensor y_train = Tensor::from_data({n_labeled, 1}, std::move(labels));

  const Rng root(cfg.seed);
  double best_err_sum = 2.0;
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng = root.child("restart", static_cast<std::uint64_t>(restart));
    detail::Mlp mlp(static_cast<int>(dim), cfg.hidden, rng);
    std::vector<Tensor> params{mlp.w1, mlp.b1, mlp.w2, mlp.b2};
    std::vector<std::vector<double>> velocity(params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
      velocity[p].assign(params[p].data().size(), 0.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const Tensor p = mlp.probs(x_train);
      const Tensor pc = diff::clamp(p, 1e-7, 1.0 - 1e-7);
      const Tensor ll = diff::add(
          diff::mul(y_train, diff::log(pc)),
          diff::mul(diff::rsub_scalar(1.0, y_train), diff::log(diff::rsub_scalar(1.0, pc))));
      diff::backward(diff::neg(diff::mean(ll)));
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = params[pi].data();
        const auto& g = params[pi].grad();
        auto& v = velocity[pi];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
          w[i] -= cfg.lr * v[i];
        }
      }
    }

    const Tensor p_eval = mlp.probs(x_eval);
    double err_s = 0.0, err_t = 0.0;
    const std::size_t ns = s_eval.size();
    for (std::size_t i = 0; i < p_eval.data().size(); ++i) {
      const bool said_target = p_eval.data()[i] >= 0.5;
      if (i < ns) {
        if (said_target) err_s += 1.0;
      } else {
        if (!said_target) err_t += 1.0;
      }
    }
    err_s /= static_cast<double>(ns);
    err_t /= static_cast<double>(t_eval.size());
    best_err_sum = std::min(best_err_sum, err_s + err_t);
  }

  double d = 2.0 * (1.0 - best_err_sum);
  if (d < 0.0) d = 0.0;
  if (d > 2.0) d = 2.0;
  return d;
}

/// Unique class subsets observed in the data, sorted by size then
/// lexicographically. Never expands unobserved combinations.
inline std::vector<std::vector<int>> enumerate_mixed_classes(
    const DomainFeatureSet& data) {
  data.validate();
  std::vector<std::vector<int>> subsets;
  for (const auto& s : data.samples) {
    std::vector<int> key = s.subset;
    std::sort(key.begin(), key.end());
    key.erase(std::unique(key.begin(), key.end()), key.end());
    subsets.push_back(std::move(key));
  }
  std::sort(subsets.begin(), subsets.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a < b;
            });
  subsets.erase(std::unique(subsets.begin(), subsets.end()), subsets.end());
  return subsets;
}

/// Mixed-class H-divergence: one estimator per observed subset; subsets
/// missing from either domain (or under the sample floor) are reported but
/// excluded from the total.
inline DivergenceReport estimate_mch(const DomainFeatureSet& data,
                                     const TrainerConfig& cfg) {
  cfg.validate();
  data.validate();
  DivergenceReport report;
  const auto subsets = enumerate_mixed_classes(data);
  for (const auto& subset : subsets) {
    if (subset.empty()) continue;  // class-conditioned terms need a class
    SubsetTerm term;
    term.subset = subset;
    std::vector<std::vector<double>> s_feats, t_feats;
    for (const auto& s : data.samples) {
      std::vector<int> key = s.subset;
      std::sort(key.begin(), key.end());
      key.erase(std::unique(key.begin(), key.end()), key.end());
      if (key != subset) continue;
      (s.domain == 0 ? s_feats : t_feats).push_back(s.vector);
    }
    term.n_source = static_cast<int>(s_feats.size());
    term.n_target = static_cast<int>(t_feats.size());
    if (term.n_source >= cfg.min_per_domain && term.n_target >= cfg.min_per_domain) {
      term.estimable = true;
      term.d_h = estimate_h_divergence(s_feats, t_feats, cfg);
      report.total += term.d_h;
    }
    report.per_subset.push_back(std::move(term));
  }
  bool any = false;
  for (const auto& t : report.per_subset) any = any || t.estimable;
  if (!any)
    throw std::runtime_error(
        "estimate_mch: no subset has enough samples in both domains");
  return report;
}

}  // namespace scfam::divergence
