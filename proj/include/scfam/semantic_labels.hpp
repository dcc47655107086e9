#pragma once

// Semantic vector labeling over receptive fields, and the ground-truth maps
// consumed by the semantic prediction losses.
//
// A feature position is labeled with a K-dim binary vector: bit c is set
// when some class-c box covers enough of the position's footprint. For each
// box the reference area is S_p = min(area(field), area(box)) and the bit is
// set when intersection / S_p >= zeta. Boxes of one class OR together.

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfam/rf_calculus.hpp"

namespace scfam::labels {

/// Axis-aligned pixel box, half-open, with its class id.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int class_id = 0;

  long long area() const {
    return static_cast<long long>(x1 - x0) * static_cast<long long>(y1 - y0);
  }
};

/// Image pixels (row-major, channel-planar, values in [0,1]) plus ground
/// truth boxes. `pixels` may be empty when only the geometry matters.
struct AnnotatedScene {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;  // channels * height * width
  std::vector<Box> boxes;
};

struct LabelingConfig {
  double zeta = 0.6;
  int num_classes = 0;

  void validate() const {
    if (!(zeta > 0.0 && zeta <= 1.0))
      throw std::invalid_argument("LabelingConfig: zeta must be in (0,1]");
    if (num_classes < 1)
      throw std::invalid_argument("LabelingConfig: num_classes must be >= 1");
  }
};

struct Map2D {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> values;  // h*w

  std::uint8_t at(int i, int j) const { return values[static_cast<std::size_t>(i) * w + j]; }
};

struct Map3D {
  int k = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> values;  // k*h*w

  std::uint8_t at(int c, int i, int j) const {
    return values[(static_cast<std::size_t>(c) * h + i) * w + j];
  }
};

struct SemanticLabelMaps {
  Map2D local;
  Map3D mid;
  std::vector<std::uint8_t> global_vec;
};

/// Clips boxes to image bounds and drops the ones that end up with zero
/// area; returns the number dropped.
inline int normalize_boxes(AnnotatedScene& scene) {
  std::vector<Box> kept;
  kept.reserve(scene.boxes.size());
  int dropped = 0;
  for (Box b : scene.boxes) {
    b.x0 = std::max(b.x0, 0);
    b.y0 = std::max(b.y0, 0);
    b.x1 = std::min(b.x1, scene.width);
    b.y1 = std::min(b.y1, scene.height);
    if (b.x1 > b.x0 && b.y1 > b.y0)
      kept.push_back(b);
    else
      ++dropped;
  }
  scene.boxes = std::move(kept);
  return dropped;
}

inline long long intersection_area(const rf::FieldRect& f, const Box& b) {
  const int x0 = std::max(f.x0, b.x0);
  const int y0 = std::max(f.y0, b.y0);
  const int x1 = std::min(f.x1, b.x1);
  const int y1 = std::min(f.y1, b.y1);
  if (x1 <= x0 || y1 <= y0) return 0;
  return static_cast<long long>(x1 - x0) * static_cast<long long>(y1 - y0);
}

/// Semantic vector of one receptive field: bit per class, boxes OR together.
/// Boundary intersections with ratio exactly zeta count as present.
inline std::vector<std::uint8_t> label_semantic_vector(
    const std::vector<Box>& boxes, int num_classes, double zeta,
    const rf::FieldRect& field) {
  if (field.area() <= 0)
    throw std::invalid_argument("label_semantic_vector: field has zero area");
  if (num_classes < 1)
    throw std::invalid_argument("label_semantic_vector: num_classes must be >= 1");
  std::vector<std::uint8_t> vec(static_cast<std::size_t>(num_classes), 0);
  const double field_area = static_cast<double>(field.area());
  for (const Box& b : boxes) {
    if (b.area() <= 0) continue;
    if (b.class_id < 0 || b.class_id >= num_classes) {
      std::ostringstream os;
      os << "label_semantic_vector: class id " << b.class_id << " outside [0,"
         << num_classes << ")";
      throw std::invalid_argument(os.str());
    }
    const double expected = std::min(field_area, static_cast<double>(b.area()));
    const double inter = static_cast<double>(intersection_area(field, b));
    if (inter / expected >= zeta) vec[static_cast<std::size_t>(b.class_id)] = 1;
  }
  return vec;
}

/// Foreground/background map on the layer-k1 grid: 1 where the semantic
/// vector of the projected footprint is non-zero.
inline Map2D label_map_local(const AnnotatedScene& scene,
                             const rf::ConvStackSpec& stack, int k1,
                             const LabelingConfig& cfg) {
  cfg.validate();
  const rf::GridSize g = rf::output_grid(stack, k1, scene.height, scene.width);
  Map2D map{g.h, g.w, std::vector<std::uint8_t>(static_cast<std::size_t>(g.h) * g.w, 0)};
  for (int i = 0; i < g.h; ++i) {
    for (int j = 0; j < g.w; ++j) {
      const rf::FieldRect f = rf::project_field(stack, k1, i, j, scene.height, scene.width);
      const auto vec = label_semantic_vector(scene.boxes, cfg.num_classes, cfg.zeta, f);
      std::uint8_t any = 0;
      for (auto v : vec) any |= v;
      map.values[static_cast<std::size_t>(i) * g.w + j] = any;
    }
  }
  return map;
}

/// Per-class map on the layer-k2 grid: the full semantic vector per position.
inline Map3D label_map_mid(const AnnotatedScene& scene,
                           const rf::ConvStackSpec& stack, int k2,
                           const LabelingConfig& cfg) {
  cfg.validate();
  const rf::GridSize g = rf::output_grid(stack, k2, scene.height, scene.width);
  Map3D map{cfg.num_classes, g.h, g.w,
            std::vector<std::uint8_t>(
                static_cast<std::size_t>(cfg.num_classes) * g.h * g.w, 0)};
  for (int i = 0; i < g.h; ++i) {
    for (int j = 0; j < g.w; ++j) {
      const rf::FieldRect f = rf::project_field(stack, k2, i, j, scene.height, scene.width);
      const auto vec = label_semantic_vector(scene.boxes, cfg.num_classes, cfg.zeta, f);
      for (int c = 0; c < cfg.num_classes; ++c)
        map.values[(static_cast<std::size_t>(c) * g.h + i) * g.w + j] = vec[static_cast<std::size_t>(c)];
    }
  }
  return map;
}

/// Union of classes present anywhere in the scene.
inline std::vector<std::uint8_t> label_global(const AnnotatedScene& scene,
                                              int num_classes) {
  std::vector<std::uint8_t> vec(static_cast<std::size_t>(num_classes), 0);
  for (const Box& b : scene.boxes) {
    if (b.area() <= 0) continue;
    if (b.class_id >= 0 && b.class_id < num_classes)
      vec[static_cast<std::size_t>(b.class_id)] = 1;
  }
  return vec;
}

/// All three granularities for the configured taps.
inline SemanticLabelMaps build_label_maps(const AnnotatedScene& scene,
                                          const rf::ConvStackSpec& stack,
                                          int k1, int k2,
                                          const LabelingConfig& cfg) {
  SemanticLabelMaps maps;
  maps.local = label_map_local(scene, stack, k1, cfg);
  maps.mid = label_map_mid(scene, stack, k2, cfg);
  maps.global_vec = label_global(scene, cfg.num_classes);
  return maps;
}

}  // namespace scfam::labels
