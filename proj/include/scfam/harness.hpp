#pragma once

// End-to-end orchestration: adversarial SCFAM training on two-domain scene
// datasets, component toggles, metrics, ablation grids, and report files.
//
// Batching alternates 1:1 between domains inside each iteration: source
// scenes contribute the detection surrogate, SPM losses, consistency, and
// DA losses; target scenes contribute DA losses only, through an image-only
// view that cannot see target annotations. Runs are bitwise reproducible:
// all randomness is derived from the config seed, and the metrics CSV holds
// only deterministic columns (wall-clock goes to a sidecar).

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scfam/divergence.hpp"
#include "scfam/harness_config.hpp"
#include "scfam/losses.hpp"
#include "scfam/net.hpp"
#include "scfam/optim.hpp"
#include "scfam/plot.hpp"
#include "scfam/rng.hpp"
#include "scfam/scene_io.hpp"
#include "scfam/semantic_labels.hpp"

namespace scfam::harness {

using diff::Tensor;

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

inline bool present(double v) { return !std::isnan(v); }

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsRow {
  int iter = 0;
  double l_det = kAbsent;
  double l_sl = kAbsent, l_sm = kAbsent, l_sg = kAbsent;
  double l_l = kAbsent, l_m = kAbsent, l_g = kAbsent;
  double l_cr = kAbsent;
  double l_all = kAbsent;
  double dh_f2 = kAbsent;
  double score = kAbsent;
  double seconds = kAbsent;  // wall clock; sidecar only, never in metrics.csv
};

struct MetricsHistory {
  Toggles toggles;
  std::vector<MetricsRow> rows;
};

/// Column set depends on the toggles: disabled components drop their columns.
inline std::vector<std::string> metrics_columns(const Toggles& t) {
  std::vector<std::string> cols{"iter", "L_det"};
  if (t.spm) {
    cols.push_back("L_Sl");
    cols.push_back("L_Sm");
    cols.push_back("L_Sg");
  }
  if (t.mda) {
    cols.push_back("L_l");
    cols.push_back("L_m");
    cols.push_back("L_g");
  }
  if (t.scr) cols.push_back("L_CR");
  cols.push_back("L_all");
  cols.push_back("dH_F2");
  cols.push_back("score");
  return cols;
}

inline double metrics_field(const MetricsRow& r, const std::string& name) {
  if (name == "iter") return r.iter;
  if (name == "L_det") return r.l_det;
  if (name == "L_Sl") return r.l_sl;
  if (name == "L_Sm") return r.l_sm;
  if (name == "L_Sg") return r.l_sg;
  if (name == "L_l") return r.l_l;
  if (name == "L_m") return r.l_m;
  if (name == "L_g") return r.l_g;
  if (name == "L_CR") return r.l_cr;
  if (name == "L_all") return r.l_all;
  if (name == "dH_F2") return r.dh_f2;
  if (name == "score") return r.score;
  if (name == "seconds") return r.seconds;
  throw std::invalid_argument("metrics_field: unknown column " + name);
}

inline void write_metrics_csv(const MetricsHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot write " + path);
  const auto cols = metrics_columns(history.toggles);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : history.rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out << ",";
      if (cols[i] == "iter") {
        out << r.iter;
      } else {
        const double v = metrics_field(r, cols[i]);
        if (present(v)) out << fmt_g(v);
      }
    }
    out << "\n";
  }
}

inline void write_timing_csv(const MetricsHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_timing_csv: cannot write " + path);
  out << "iter,seconds\n";
  for (const auto& r : history.rows)
    if (present(r.seconds)) out << r.iter << "," << fmt_g(r.seconds) << "\n";
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Average precision of a binary ranking; ties keep first-come order.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& positives) {
  if (scores.size() != positives.size() || scores.empty())
    throw std::invalid_argument("average_precision: bad inputs");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0;
  for (auto p : positives) n_pos += p;
  if (n_pos == 0) return 0.0;
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (positives[order[k]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

/// ROC AUC via rank statistics (ties get midranks).
inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<std::uint8_t>& positives) {
  if (scores.size() != positives.size() || scores.empty())
    throw std::invalid_argument("roc_auc: bad inputs");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t n_pos = 0;
  for (auto p : positives) n_pos += p;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (positives[order[k]]) rank_sum += midrank;
    i = j + 1;
  }
  return (rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

inline Tensor image_tensor(const labels::AnnotatedScene& scene) {
  return Tensor::from_data({scene.channels, scene.height, scene.width}, scene.pixels);
}

/// A source scene with every training target precomputed.
struct SourceScene {
  Tensor image;
  Tensor local_target;    // (H1,W1)
  Tensor mid_target;      // (K,H2,W2)
  Tensor global_target;   // (K)
  Tensor det_obj_target;  // (1,H3,W3)
  Tensor det_cls_target;  // (K,H3,W3)
  Tensor det_box_target;  // (4,H3,W3)
  Tensor det_box_mask;    // (4,H3,W3), 1 on positive cells
  int det_positives = 0;
};

/// Target-domain training view: the image and nothing else. Constructed
/// straight from pixels so annotations cannot leak into the train loop.
struct UnlabeledScene {
  Tensor image;
};

struct TrainData {
  std::vector<SourceScene> source;
  std::vector<UnlabeledScene> target;
  std::vector<labels::AnnotatedScene> source_val;
  std::vector<labels::AnnotatedScene> target_val;
};

inline Tensor map2d_tensor(const labels::Map2D& m) {
  std::vector<double> data(m.values.begin(), m.values.end());
  return Tensor::from_data({m.h, m.w}, std::move(data));
}

inline Tensor map3d_tensor(const labels::Map3D& m) {
  std::vector<double> data(m.values.begin(), m.values.end());
  return Tensor::from_data({m.k, m.h, m.w}, std::move(data));
}

inline SourceScene build_source_scene(const labels::AnnotatedScene& scene,
                                      const ExperimentConfig& cfg) {
  const auto stack = cfg.backbone.stack();
  const labels::LabelingConfig lab{cfg.zeta, cfg.num_classes};
  SourceScene out;
  out.image = image_tensor(scene);
  out.local_target =
      map2d_tensor(labels::label_map_local(scene, stack, cfg.backbone.tap_f1, lab));
  out.mid_target =
      map3d_tensor(labels::label_map_mid(scene, stack, cfg.backbone.tap_f2, lab));
  {
    const auto g = labels::label_global(scene, cfg.num_classes);
    std::vector<double> data(g.begin(), g.end());
    out.global_target = Tensor::from_data({cfg.num_classes}, std::move(data));
  }

  // Detection surrogate targets on the F3 grid.
  const auto local_f3 =
      labels::label_map_local(scene, stack, cfg.backbone.tap_f3, lab);
  const auto mid_f3 = labels::label_map_mid(scene, stack, cfg.backbone.tap_f3, lab);
  const int h3 = local_f3.h, w3 = local_f3.w;
  std::vector<double> obj(local_f3.values.begin(), local_f3.values.end());
  out.det_obj_target = Tensor::from_data({1, h3, w3}, std::move(obj));
  out.det_cls_target = map3d_tensor(mid_f3);

  long long cell = 1;
  for (int i = 0; i < cfg.backbone.tap_f3; ++i)
    cell *= stack.layers[static_cast<std::size_t>(i)].stride;
  const double cell_px = static_cast<double>(cell);
  std::vector<double> box_t(static_cast<std::size_t>(4) * h3 * w3, 0.0);
  std::vector<double> box_m(box_t.size(), 0.0);
  int positives = 0;
  for (int i = 0; i < h3; ++i) {
    for (int j = 0; j < w3; ++j) {
      if (!local_f3.at(i, j)) continue;
      if (scene.boxes.empty()) continue;
      const auto field = rf::project_field(stack, cfg.backbone.tap_f3, i, j,
                                           scene.height, scene.width);
      const double cx = 0.5 * (field.x0 + field.x1);
      const double cy = 0.5 * (field.y0 + field.y1);
      const labels::Box* best = nullptr;
      double best_d2 = 0.0;
      for (const auto& b : scene.boxes) {
        const double bx = 0.5 * (b.x0 + b.x1);
        const double by = 0.5 * (b.y0 + b.y1);
        const double d2 = (bx - cx) * (bx - cx) + (by - cy) * (by - cy);
        if (!best || d2 < best_d2) {
          best = &b;
          best_d2 = d2;
        }
      }
      const double bx = 0.5 * (best->x0 + best->x1);
      const double by = 0.5 * (best->y0 + best->y1);
      const double bw = static_cast<double>(best->x1 - best->x0);
      const double bh = static_cast<double>(best->y1 - best->y0);
      const std::size_t at = static_cast<std::size_t>(i) * w3 + j;
      const std::size_t plane = static_cast<std::size_t>(h3) * w3;
      box_t[0 * plane + at] = (bx - cx) / cell_px;
      box_t[1 * plane + at] = (by - cy) / cell_px;
      box_t[2 * plane + at] = std::log(bw / cell_px);
      box_t[3 * plane + at] = std::log(bh / cell_px);
      for (int c = 0; c < 4; ++c) box_m[static_cast<std::size_t>(c) * plane + at] = 1.0;
      ++positives;
    }
  }
  out.det_box_target = Tensor::from_data({4, h3, w3}, std::move(box_t));
  out.det_box_mask = Tensor::from_data({4, h3, w3}, std::move(box_m));
  out.det_positives = positives;
  return out;
}

inline TrainData prepare_train_data(const ExperimentConfig& cfg) {
  TrainData data;
  const auto src_scenes = io::load_dataset(cfg.data.source_train);
  if (src_scenes.empty())
    throw std::runtime_error("prepare_train_data: empty source dataset " +
                             cfg.data.source_train);
  for (const auto& s : src_scenes) data.source.push_back(build_source_scene(s, cfg));
  // target view: images only, boxes dropped on the spot
  for (const auto& s : io::load_dataset(cfg.data.target_train))
    data.target.push_back(UnlabeledScene{image_tensor(s)});
  if (data.target.empty() && cfg.toggles.mda)
    throw std::runtime_error("prepare_train_data: empty target dataset " +
                             cfg.data.target_train);
  data.source_val = io::load_dataset(cfg.data.source_val);
  data.target_val = io::load_dataset(cfg.data.target_val);
  return data;
}

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

struct IterationLosses {
  Tensor det, sl, sm, sg, da_l, da_m, da_g, cr;
};

inline Tensor det_loss(const net::DetOut& det, const SourceScene& s, double eps) {
  const Tensor obj =
      diff::mean(losses::detail::bce_map(det.objectness, s.det_obj_target, eps));
  const Tensor cls =
      diff::mean(losses::detail::bce_map(det.class_map, s.det_cls_target, eps));
  Tensor box = Tensor::scalar(0.0);
  if (s.det_positives > 0) {
    const Tensor masked =
        diff::mul(diff::smooth_l1(det.box_map, s.det_box_target), s.det_box_mask);
    box = diff::mul_scalar(diff::sum(masked), 1.0 / (4.0 * s.det_positives));
  }
  return diff::add(diff::add(obj, cls), box);
}

/// One optimization step's loss graph over a source batch and (for MDA) a
/// target batch. Component tensors for disabled toggles stay zero constants.
inline IterationLosses compute_losses(const net::ScfamNet& model,
                                      const ExperimentConfig& cfg,
                                      const std::vector<const SourceScene*>& source,
                                      const std::vector<const UnlabeledScene*>& target) {
  const double eps = cfg.loss_weights.eps_clamp;
  const auto zero = [] { return Tensor::scalar(0.0); };
  IterationLosses out{zero(), zero(), zero(), zero(), zero(), zero(), zero(), zero()};

  Tensor det_acc = zero(), sl_acc = zero(), sm_acc = zero(), sg_acc = zero(),
         cr_acc = zero();
  Tensor dal_acc = zero(), dam_acc = zero(), dag_acc = zero();
  int da_count = 0;

  for (const SourceScene* s : source) {
    const auto taps = model.forward_backbone(s->image);
    const auto det = model.forward_det_head(taps.f3);
    det_acc = diff::add(det_acc, det_loss(det, *s, eps));

    net::SpmOut spm;
    if (cfg.toggles.spm) {
      spm = model.forward_spm(taps);
      sl_acc = diff::add(sl_acc, losses::loss_spm_local(spm.p_local, s->local_target, eps));
      sm_acc = diff::add(sm_acc, losses::loss_spm_mid(spm.p_mid, s->mid_target, eps));
      sg_acc = diff::add(sg_acc,
                         losses::loss_spm_global(spm.p_global, s->global_target, eps));
      if (cfg.toggles.scr) {
        const int ph = std::min(cfg.pool_h, spm.p_mid.dim(1));
        const int pw = std::min(cfg.pool_w, spm.p_mid.dim(2));
        cr_acc = diff::add(
            cr_acc, losses::loss_consistency(spm.p_mid, spm.p_global, ph, pw, eps));
      }
    }
    if (cfg.toggles.mda) {
      const bool use_sbc = cfg.toggles.spm && cfg.toggles.sbc;
      const Tensor local_in =
          use_sbc ? net::semantic_bridge(taps.f1, spm.s1_feat) : taps.f1;
      const Tensor mid_in =
          use_sbc ? net::semantic_bridge(taps.f2, spm.s2_feat) : taps.f2;
      const auto disc = model.forward_discriminators(local_in, mid_in, taps.f3);
      const auto tag = losses::DomainTag::kSource;
      if (cfg.toggles.spm && cfg.toggles.asm_weights) {
        dal_acc = diff::add(dal_acc,
                            losses::loss_da_pixel_attended(
                                disc.d_local, tag,
                                losses::attention_weight_local(spm.p_local), eps));
        dam_acc = diff::add(dam_acc, losses::loss_da_pixel_attended(
                                         disc.d_mid, tag,
                                         losses::attention_weight_mid(spm.p_mid), eps));
      } else {
        dal_acc = diff::add(dal_acc, losses::loss_da_pixel(disc.d_local, tag, eps));
        dam_acc = diff::add(dam_acc, losses::loss_da_pixel(disc.d_mid, tag, eps));
      }
      dag_acc = diff::add(
          dag_acc, losses::loss_da_global(disc.d_global, tag, cfg.loss_weights.gamma, eps));
      ++da_count;
    }
  }

  if (cfg.toggles.mda) {
    for (const UnlabeledScene* t : target) {
      const auto taps = model.forward_backbone(t->image);
      net::SpmOut spm;
      const bool need_spm =
          cfg.toggles.spm && (cfg.toggles.sbc || cfg.toggles.asm_weights);
      if (need_spm) spm = model.forward_spm(taps);
      const bool use_sbc = cfg.toggles.spm && cfg.toggles.sbc;
      const Tensor local_in =
          use_sbc ? net::semantic_bridge(taps.f1, spm.s1_feat) : taps.f1;
      const Tensor mid_in =
          use_sbc ? net::semantic_bridge(taps.f2, spm.s2_feat) : taps.f2;
      const auto disc = model.forward_discriminators(local_in, mid_in, taps.f3);
      const auto tag = losses::DomainTag::kTarget;
      if (cfg.toggles.spm && cfg.toggles.asm_weights) {
        dal_acc = diff::add(dal_acc,
                            losses::loss_da_pixel_attended(
                                disc.d_local, tag,
                                losses::attention_weight_local(spm.p_local), eps));
        dam_acc = diff::add(dam_acc, losses::loss_da_pixel_attended(
                                         disc.d_mid, tag,
                                         losses::attention_weight_mid(spm.p_mid), eps));
      } else {
        dal_acc = diff::add(dal_acc, losses::loss_da_pixel(disc.d_local, tag, eps));
        dam_acc = diff::add(dam_acc, losses::loss_da_pixel(disc.d_mid, tag, eps));
      }
      dag_acc = diff::add(
          dag_acc, losses::loss_da_global(disc.d_global, tag, cfg.loss_weights.gamma, eps));
      ++da_count;
    }
  }

  const double n_src = static_cast<double>(source.size());
  out.det = diff::mul_scalar(det_acc, 1.0 / n_src);
  if (cfg.toggles.spm) {
    out.sl = diff::mul_scalar(sl_acc, 1.0 / n_src);
    out.sm = diff::mul_scalar(sm_acc, 1.0 / n_src);
    out.sg = diff::mul_scalar(sg_acc, 1.0 / n_src);
    if (cfg.toggles.scr) out.cr = diff::mul_scalar(cr_acc, 1.0 / n_src);
  }
  if (cfg.toggles.mda && da_count > 0) {
    out.da_l = diff::mul_scalar(dal_acc, 1.0 / da_count);
    out.da_m = diff::mul_scalar(dam_acc, 1.0 / da_count);
    out.da_g = diff::mul_scalar(dag_acc, 1.0 / da_count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double score = 0.0;          // per-cell objectness average precision
  double objectness_auc = 0.5;
  double spm_local_acc = kAbsent;
  double dh_f2 = kAbsent;      // filled when the probe runs
};

inline std::vector<std::vector<double>> collect_f2_features(
    const net::ScfamNet& model, const std::vector<labels::AnnotatedScene>& scenes,
    int max_scenes, int stride) {
  std::vector<std::vector<double>> feats;
  const int n = std::min<int>(max_scenes, static_cast<int>(scenes.size()));
  for (int i = 0; i < n; ++i) {
    const auto taps = model.forward_backbone(image_tensor(scenes[static_cast<std::size_t>(i)]));
    const Tensor& f2 = taps.f2;
    const int c = f2.dim(0), h = f2.dim(1), w = f2.dim(2);
    for (int r = 0; r < h; r += stride)
      for (int col = 0; col < w; col += stride) {
        std::vector<double> v(static_cast<std::size_t>(c));
        for (int ch = 0; ch < c; ++ch)
          v[static_cast<std::size_t>(ch)] =
              f2.data()[(static_cast<std::size_t>(ch) * h + r) * w + col];
        feats.push_back(std::move(v));
      }
  }
  return feats;
}

inline double probe_f2_divergence(const net::ScfamNet& model,
                                  const std::vector<labels::AnnotatedScene>& source_val,
                                  const std::vector<labels::AnnotatedScene>& target_val,
                                  const ProbeConfig& probe) {
  const auto s = collect_f2_features(model, source_val, probe.scenes, probe.position_stride);
  const auto t = collect_f2_features(model, target_val, probe.scenes, probe.position_stride);
  divergence::TrainerConfig tc;
  tc.hidden = probe.hidden;
  tc.epochs = probe.epochs;
  tc.restarts = probe.restarts;
  tc.seed = probe.seed;
  return divergence::estimate_h_divergence(s, t, tc);
}

/// Surrogate detection score plus SPM accuracy on annotated target scenes,
/// and (optionally) the F2 divergence probe.
inline EvalResult evaluate(const net::ScfamNet& model, const TrainData& data,
                           const ExperimentConfig& cfg, bool with_divergence) {
  if (data.target_val.empty())
    throw std::invalid_argument("evaluate: empty target validation set");
  const auto stack = cfg.backbone.stack();
  const labels::LabelingConfig lab{cfg.zeta, cfg.num_classes};

  std::vector<double> scores;
  std::vector<std::uint8_t> positives;
  double spm_hits = 0.0, spm_total = 0.0;
  const int n_eval = std::min<int>(cfg.eval_scenes, static_cast<int>(data.target_val.size()));
  for (int i = 0; i < n_eval; ++i) {
    const auto& scene = data.target_val[static_cast<std::size_t>(i)];
    const auto taps = model.forward_backbone(image_tensor(scene));
    const auto det = model.forward_det_head(taps.f3);
    const auto obj_gt = labels::label_map_local(scene, stack, cfg.backbone.tap_f3, lab);
    for (std::size_t p = 0; p < obj_gt.values.size(); ++p) {
      scores.push_back(det.objectness.data()[p]);
      positives.push_back(obj_gt.values[p]);
    }
    if (cfg.toggles.spm) {
      const auto spm = model.forward_spm(taps);
      const auto local_gt =
          labels::label_map_local(scene, stack, cfg.backbone.tap_f1, lab);
      for (std::size_t p = 0; p < local_gt.values.size(); ++p) {
        const bool said = spm.p_local.data()[p] >= 0.5;
        spm_hits += (said == (local_gt.values[p] != 0)) ? 1.0 : 0.0;
        spm_total += 1.0;
      }
    }
  }

  EvalResult out;
  out.score = average_precision(scores, positives);
  out.objectness_auc = roc_auc(scores, positives);
  if (spm_total > 0.0) out.spm_local_acc = spm_hits / spm_total;
  if (with_divergence) {
    if (data.source_val.empty())
      throw std::invalid_argument("evaluate: divergence probe needs source validation scenes");
    out.dh_f2 = probe_f2_divergence(model, data.source_val, data.target_val, cfg.probe);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOutput {
  std::shared_ptr<net::ScfamNet> model;
  MetricsHistory history;
  EvalResult final_eval;
};

namespace detail {

/// Deterministic epoch-shuffled index stream.
class IndexStream {
 public:
  IndexStream(std::size_t n, Rng rng) : n_(n), rng_(std::move(rng)) { refill(); }

  std::size_t next() {
    if (cursor_ >= order_.size()) refill();
    return order_[cursor_++];
  }

  std::vector<std::size_t> peek_first(std::size_t count) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count && i < order_.size(); ++i)
      out.push_back(order_[i]);
    return out;
  }

 private:
  void refill() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    rng_.shuffle(order_);
    cursor_ = 0;
  }

  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

inline TrainOutput train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
        .count();
  };

  TrainData data = prepare_train_data(cfg);
  auto model = std::make_shared<net::ScfamNet>(cfg.net_config(), cfg.seed);
  NamedTensors params = model->parameters();
  SgdOptimizer opt(cfg.optimizer.lr, cfg.optimizer.momentum, cfg.optimizer.weight_decay);

  TrainOutput out;
  out.model = model;
  out.history.toggles = cfg.toggles;

  namespace fs = std::filesystem;
  const bool writing = !cfg.output_dir.empty();
  if (writing) {
    fs::create_directories(cfg.output_dir);
    save_config(cfg, (fs::path(cfg.output_dir) / "config.resolved.json").string());
  }

  const int total = cfg.optimizer.total_iters();
  const Rng root(cfg.seed);
  detail::IndexStream source_stream(data.source.size(), root.child("order.source"));
  detail::IndexStream target_stream(std::max<std::size_t>(data.target.size(), 1),
                                    root.child("order.target"));

  const auto gather_source = [&](const std::vector<std::size_t>& idx) {
    std::vector<const SourceScene*> batch;
    for (auto i : idx) batch.push_back(&data.source[i]);
    return batch;
  };
  const auto gather_target = [&](const std::vector<std::size_t>& idx) {
    std::vector<const UnlabeledScene*> batch;
    if (!cfg.toggles.mda || data.target.empty()) return batch;
    for (auto i : idx) batch.push_back(&data.target[i]);
    return batch;
  };

  const auto fill_row = [&](int iter, const IterationLosses& losses_t,
                            const Tensor& l_all, bool with_eval) {
    MetricsRow row;
    row.iter = iter;
    row.l_det = losses_t.det.value();
    if (cfg.toggles.spm) {
      row.l_sl = losses_t.sl.value();
      row.l_sm = losses_t.sm.value();
      row.l_sg = losses_t.sg.value();
    }
    if (cfg.toggles.mda) {
      row.l_l = losses_t.da_l.value();
      row.l_m = losses_t.da_m.value();
      row.l_g = losses_t.da_g.value();
    }
    if (cfg.toggles.scr) row.l_cr = losses_t.cr.value();
    row.l_all = l_all.value();
    if (with_eval) {
      const EvalResult ev = evaluate(*model, data, cfg, /*with_divergence=*/true);
      row.dh_f2 = ev.dh_f2;
      row.score = ev.score;
    }
    row.seconds = elapsed();
    return row;
  };

  if (total > 0) {
    // Iteration-0 row: losses on a peek of the first batch, no update.
    const auto src0 = gather_source(source_stream.peek_first(
        std::min<std::size_t>(cfg.batch_source, data.source.size())));
    const auto tgt0 = gather_target(target_stream.peek_first(
        std::min<std::size_t>(cfg.batch_target, data.target.size())));
    const IterationLosses l0 = compute_losses(*model, cfg, src0, tgt0);
    const Tensor all0 = losses::total_loss(l0.det, l0.da_l, l0.da_m, l0.da_g, l0.sl,
                                           l0.sm, l0.sg, l0.cr, cfg.loss_weights);
    out.history.rows.push_back(fill_row(0, l0, all0, /*with_eval=*/true));
  }

  for (int iter = 1; iter <= total; ++iter) {
    if (iter == cfg.optimizer.iters_main + 1) opt.set_lr(cfg.optimizer.lr_final);

    std::vector<std::size_t> src_idx;
    for (int b = 0; b < cfg.batch_source && !data.source.empty(); ++b)
      src_idx.push_back(source_stream.next());
    std::vector<std::size_t> tgt_idx;
    if (cfg.toggles.mda && !data.target.empty())
      for (int b = 0; b < cfg.batch_target; ++b) tgt_idx.push_back(target_stream.next());

    const IterationLosses losses_t =
        compute_losses(*model, cfg, gather_source(src_idx), gather_target(tgt_idx));
    const Tensor l_all =
        losses::total_loss(losses_t.det, losses_t.da_l, losses_t.da_m, losses_t.da_g,
                           losses_t.sl, losses_t.sm, losses_t.sg, losses_t.cr,
                           cfg.loss_weights);
    if (!std::isfinite(l_all.value())) {
      if (writing) {
        model->save((fs::path(cfg.output_dir) / "diagnostic_weights").string());
        std::ofstream diag((fs::path(cfg.output_dir) / "diagnostic.json").string());
        nlohmann::json j;
        j["iter"] = iter;
        j["L_det"] = losses_t.det.value();
        j["L_all"] = l_all.value();
        diag << j.dump(2) << "\n";
      }
      throw std::runtime_error("train: non-finite loss at iteration " +
                               std::to_string(iter));
    }
    diff::backward(l_all);
    opt.step(params);

    const bool log_now = (iter % cfg.log_interval == 0) || iter == total;
    if (log_now) {
      const bool eval_now = (iter % cfg.probe.interval == 0) || iter == total;
      out.history.rows.push_back(fill_row(iter, losses_t, l_all, eval_now));
    }
  }

  if (total > 0) {
    const auto& last = out.history.rows.back();
    out.final_eval.score = last.score;
    out.final_eval.dh_f2 = last.dh_f2;
    const EvalResult full = evaluate(*model, data, cfg, /*with_divergence=*/false);
    out.final_eval.objectness_auc = full.objectness_auc;
    out.final_eval.spm_local_acc = full.spm_local_acc;
  }

  if (writing) {
    write_metrics_csv(out.history, (fs::path(cfg.output_dir) / "metrics.csv").string());
    write_timing_csv(out.history, (fs::path(cfg.output_dir) / "timing.csv").string());
    model->save((fs::path(cfg.output_dir) / "weights").string());
    nlohmann::json ev;
    ev["score"] = out.final_eval.score;
    ev["objectness_auc"] = out.final_eval.objectness_auc;
    if (present(out.final_eval.spm_local_acc))
      ev["spm_local_acc"] = out.final_eval.spm_local_acc;
    if (present(out.final_eval.dh_f2)) ev["dH_F2"] = out.final_eval.dh_f2;
    std::ofstream evf((fs::path(cfg.output_dir) / "eval.json").string());
    evf << ev.dump(2) << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationCell {
  std::string name;
  nlohmann::json patch;  // JSON merge-patch over the base config
};

struct AblationRow {
  std::string name;
  Toggles toggles;
  double zeta = 0.0;
  int pool_h = 0, pool_w = 0;
  double score = 0.0;
  double dh_f2 = kAbsent;
  double l_all_final = kAbsent;
};

inline ExperimentConfig patched_config(const nlohmann::json& base,
                                       const AblationCell& cell) {
  nlohmann::json merged = base;
  merged.merge_patch(cell.patch);
  ExperimentConfig cfg = merged.get<ExperimentConfig>();
  cfg.validate();
  return cfg;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows,
                               const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_ablation_csv: cannot write " + path);
  out << "name,MDA,SPM,SBC,ASM,SCR,zeta,pool_h,pool_w,score,dH_F2,L_all_final\n";
  for (const auto& r : rows) {
    out << r.name << "," << (r.toggles.mda ? 1 : 0) << "," << (r.toggles.spm ? 1 : 0)
        << "," << (r.toggles.sbc ? 1 : 0) << "," << (r.toggles.asm_weights ? 1 : 0)
        << "," << (r.toggles.scr ? 1 : 0) << "," << fmt_g(r.zeta) << "," << r.pool_h
        << "," << r.pool_w << "," << fmt_g(r.score) << ","
        << (present(r.dh_f2) ? fmt_g(r.dh_f2) : "") << ","
        << (present(r.l_all_final) ? fmt_g(r.l_all_final) : "") << "\n";
  }
}

/// Runs every cell (train + evaluate) and writes <out_root>/ablation.csv.
/// All cells are validated before any run starts; rows come back in cell
/// order regardless of completion order.
inline std::vector<AblationRow> run_ablation(const nlohmann::json& base,
                                             const std::vector<AblationCell>& cells,
                                             const std::string& out_root,
                                             int workers = 2) {
  if (cells.empty()) throw std::invalid_argument("run_ablation: empty grid");
  namespace fs = std::filesystem;

  std::vector<ExperimentConfig> configs;
  configs.reserve(cells.size());
  for (const auto& cell : cells) {
    if (cell.name.empty())
      throw std::invalid_argument("run_ablation: every cell needs a name");
    ExperimentConfig cfg = patched_config(base, cell);
    cfg.output_dir = (fs::path(out_root) / cell.name).string();
    configs.push_back(std::move(cfg));
  }

  std::vector<AblationRow> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const TrainOutput result = train(configs[i]);
        AblationRow row;
        row.name = cells[i].name;
        row.toggles = configs[i].toggles;
        row.zeta = configs[i].zeta;
        row.pool_h = configs[i].pool_h;
        row.pool_w = configs[i].pool_w;
        row.score = result.final_eval.score;
        row.dh_f2 = result.final_eval.dh_f2;
        if (!result.history.rows.empty())
          row.l_all_final = result.history.rows.back().l_all;
        rows[i] = std::move(row);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("run_ablation: cell '" + cells[i].name +
                               "' failed: " + errors[i]);

  fs::create_directories(out_root);
  write_ablation_csv(rows, (fs::path(out_root) / "ablation.csv").string());
  return rows;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot read " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

inline std::string run_id_for(const std::string& csv_path) {
  namespace fs = std::filesystem;
  const fs::path p(csv_path);
  if (p.filename() == "metrics.csv" && p.has_parent_path())
    return p.parent_path().filename().string();
  return p.stem().string();
}

}  // namespace detail

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "iter", "L_det", "L_Sl", "L_Sm", "L_Sg", "L_l",  "L_m",
      "L_g",  "L_CR",  "L_all", "dH_F2", "score", "seconds"};
  return cols;
}

struct ReportFiles {
  std::string merged_csv;
  std::string loss_plot;
  std::string divergence_plot;
};

/// Merges per-run metrics CSVs (timing sidecars joined on iter when present)
/// into the fixed column set, and renders loss / divergence curves.
inline ReportFiles report(const std::vector<std::string>& csv_paths,
                          const std::string& out_dir) {
  if (csv_paths.empty()) throw std::invalid_argument("report: no input CSVs");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const bool multi = csv_paths.size() > 1;
  std::ofstream merged((fs::path(out_dir) / "merged.csv").string(), std::ios::trunc);
  if (multi) merged << "run,";
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) merged << (i ? "," : "") << cols[i];
  merged << "\n";

  std::vector<plot::Series> loss_series;
  std::vector<plot::Series> div_series;

  for (const auto& path : csv_paths) {
    const auto table = detail::read_csv(path);
    const std::string run = detail::run_id_for(path);

    // optional timing sidecar next to the metrics file
    std::unordered_map<std::string, std::string> seconds_by_iter;
    const fs::path sidecar = fs::path(path).parent_path() / "timing.csv";
    if (fs::exists(sidecar)) {
      const auto timing = detail::read_csv(sidecar.string());
      for (const auto& row : timing.rows)
        if (row.size() >= 2) seconds_by_iter[row[0]] = row[1];
    }

    auto col_index = [&](const std::string& name) -> int {
      for (std::size_t i = 0; i < table.header.size(); ++i)
        if (table.header[i] == name) return static_cast<int>(i);
      return -1;
    };

    plot::Series loss{run, {}, {}};
    plot::Series dvg{run, {}, {}};
    for (const auto& row : table.rows) {
      if (multi) merged << run << ",";
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) merged << ",";
        if (cols[i] == "seconds") {
          const int it_idx = col_index("iter");
          if (it_idx >= 0) {
            const auto found = seconds_by_iter.find(row[static_cast<std::size_t>(it_idx)]);
            if (found != seconds_by_iter.end()) merged << found->second;
          }
          continue;
        }
        const int idx = col_index(cols[i]);
        if (idx >= 0 && static_cast<std::size_t>(idx) < row.size())
          merged << row[static_cast<std::size_t>(idx)];
      }
      merged << "\n";

      const int it_idx = col_index("iter");
      const int all_idx = col_index("L_all");
      const int dh_idx = col_index("dH_F2");
      if (it_idx >= 0 && all_idx >= 0 &&
          !row[static_cast<std::size_t>(all_idx)].empty()) {
        loss.x.push_back(std::stod(row[static_cast<std::size_t>(it_idx)]));
        loss.y.push_back(std::stod(row[static_cast<std::size_t>(all_idx)]));
      }
      if (it_idx >= 0 && dh_idx >= 0 && !row[static_cast<std::size_t>(dh_idx)].empty()) {
        dvg.x.push_back(std::stod(row[static_cast<std::size_t>(it_idx)]));
        dvg.y.push_back(std::stod(row[static_cast<std::size_t>(dh_idx)]));
      }
    }
    if (!loss.x.empty()) loss_series.push_back(std::move(loss));
    if (!dvg.x.empty()) div_series.push_back(std::move(dvg));
  }
  merged.close();

  ReportFiles files;
  files.merged_csv = (fs::path(out_dir) / "merged.csv").string();
  files.loss_plot = (fs::path(out_dir) / "loss_curves.ppm").string();
  files.divergence_plot = (fs::path(out_dir) / "divergence_curves.ppm").string();
  plot::render_lines(loss_series, files.loss_plot);
  plot::render_lines(div_series, files.divergence_plot);
  return files;
}

}  // namespace scfam::harness
