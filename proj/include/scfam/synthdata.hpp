#pragma once

// Paired-domain toy detection scenes. The source domain renders clean
// geometric shapes (one shape family per class) on a soft background; the
// target domain applies a geometry-preserving shift (color cast, blur, haze,
// noise), so annotations carry over unchanged. Overlapping placements are
// allowed and are what produces genuine mixed-class receptive fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfam/rng.hpp"
#include "scfam/scene_io.hpp"
#include "scfam/semantic_labels.hpp"

namespace scfam::synth {

struct SceneConfig {
  int image_size = 64;
  int num_classes = 3;  // shape families: disk, square, triangle, cross, ring
  int objects_min = 1;
  int objects_max = 4;
  int object_size_min = 10;
  int object_size_max = 22;
  double overlap_allowance = 1.0;  // max fraction of a new box covered by old ones
  int place_retries = 20;
  std::uint64_t seed = 7;

  void validate() const {
    if (num_classes < 2 || num_classes > 5)
      throw std::invalid_argument("SceneConfig: num_classes must be in [2,5]");
    if (image_size < 32)
      throw std::invalid_argument("SceneConfig: image_size must be >= 32");
    if (objects_min < 0 || objects_max < objects_min)
      throw std::invalid_argument("SceneConfig: bad objects range");
    if (object_size_min < 4 || object_size_max < object_size_min ||
        object_size_max > image_size)
      throw std::invalid_argument("SceneConfig: bad object size range");
    if (overlap_allowance < 0.0 || overlap_allowance > 1.0)
      throw std::invalid_argument("SceneConfig: overlap_allowance must be in [0,1]");
  }
};

struct ShiftParams {
  double haze_strength = 0.0;      // convex blend toward the haze color
  double haze_color[3] = {0.78, 0.80, 0.84};
  double noise_sigma = 0.0;        // additive gaussian, per pixel/channel
  double color_shift[3] = {0.0, 0.0, 0.0};  // additive per channel
  int blur_radius = 0;             // box blur half-width

  bool is_identity() const {
    return haze_strength == 0.0 && noise_sigma == 0.0 && blur_radius == 0 &&
           color_shift[0] == 0.0 && color_shift[1] == 0.0 && color_shift[2] == 0.0;
  }

  void validate() const {
    if (haze_strength < 0.0 || haze_strength > 1.0 || noise_sigma < 0.0 ||
        blur_radius < 0)
      throw std::invalid_argument("ShiftParams: negative or out-of-range values");
  }
};

namespace detail {

// Per-class base colors, one per shape family.
inline const double kClassColors[5][3] = {
    {0.85, 0.25, 0.20},  // disk
    {0.20, 0.45, 0.85},  // square
    {0.20, 0.70, 0.30},  // triangle
    {0.80, 0.65, 0.15},  // cross
    {0.60, 0.25, 0.75},  // ring
};

struct Painter {
  labels::AnnotatedScene* scene;
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;

  void put(int x, int y, const double rgb[3]) {
    if (x < 0 || y < 0 || x >= scene->width || y >= scene->height) return;
    const std::size_t plane =
        static_cast<std::size_t>(scene->height) * scene->width;
    const std::size_t p = static_cast<std::size_t>(y) * scene->width + x;
    for (int c = 0; c < 3; ++c) scene->pixels[static_cast<std::size_t>(c) * plane + p] = rgb[c];
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }

  bool painted() const { return max_x >= 0; }
  labels::Box tight_box(int class_id) const {
    return {min_x, min_y, max_x + 1, max_y + 1, class_id};
  }
};

inline void draw_shape(Painter& painter, int class_id, double cx, double cy,
                       double size, const double rgb[3]) {
  const double r = size / 2.0;
  const int x0 = static_cast<int>(std::floor(cx - r)) - 1;
  const int x1 = static_cast<int>(std::ceil(cx + r)) + 1;
  const int y0 = static_cast<int>(std::floor(cy - r)) - 1;
  const int y1 = static_cast<int>(std::ceil(cy + r)) + 1;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - cx;
      const double py = y + 0.5 - cy;
      bool inside = false;
      switch (class_id) {
        case 0:  // disk
          inside = px * px + py * py <= r * r;
          break;
        case 1:  // square
          inside = std::fabs(px) <= r && std::fabs(py) <= r;
          break;
        case 2:  // triangle (upward), vertices (0,-r), (-r,r), (r,r)
          inside = py >= -r && py <= r && std::fabs(px) <= (py + r) / 2.0;
          break;
        case 3: {  // cross
          const double arm = r / 3.0;
          inside = (std::fabs(px) <= arm && std::fabs(py) <= r) ||
                   (std::fabs(py) <= arm && std::fabs(px) <= r);
          break;
        }
        case 4: {  // ring
          const double d2 = px * px + py * py;
          inside = d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
          break;
        }
        default:
          break;
      }
      if (inside) painter.put(x, y, rgb);
    }
  }
}

inline double box_overlap_fraction(const labels::Box& candidate,
                                   const std::vector<labels::Box>& existing) {
  if (candidate.area() <= 0) return 1.0;
  long long covered = 0;
  for (int y = candidate.y0; y < candidate.y1; ++y)
    for (int x = candidate.x0; x < candidate.x1; ++x)
      for (const auto& b : existing)
        if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) {
          ++covered;
          break;
        }
  return static_cast<double>(covered) / static_cast<double>(candidate.area());
}

}  // namespace detail

/// One scene, deterministic in (config, rng state). If a placement cannot
/// satisfy the overlap allowance within the retry budget the object is
/// skipped; `dropped` (when given) counts such skips.
inline labels::AnnotatedScene generate_scene(const SceneConfig& cfg, Rng& rng,
                                             int* dropped = nullptr) {
  cfg.validate();
  labels::AnnotatedScene scene;
  scene.height = cfg.image_size;
  scene.width = cfg.image_size;
  scene.channels = 3;
  const std::size_t plane =
      static_cast<std::size_t>(scene.height) * scene.width;
  scene.pixels.assign(plane * 3, 0.0);

  // background: soft gray with a vertical gradient and per-scene tint
  const double base = rng.uniform(0.72, 0.88);
  const double tilt = rng.uniform(-0.06, 0.06);
  double tint[3] = {rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                    rng.uniform(-0.03, 0.03)};
  for (int y = 0; y < scene.height; ++y) {
    const double g = base + tilt * (static_cast<double>(y) / scene.height - 0.5);
    for (int x = 0; x < scene.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * scene.width + x;
      for (int c = 0; c < 3; ++c)
        scene.pixels[static_cast<std::size_t>(c) * plane + p] =
            std::clamp(g + tint[c], 0.0, 1.0);
    }
  }

  const int n_objects = rng.uniform_int(cfg.objects_min, cfg.objects_max);
  int skipped = 0;
  for (int obj = 0; obj < n_objects; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.place_retries && !placed; ++attempt) {
      const int class_id = rng.uniform_int(0, cfg.num_classes - 1);
      const double size =
          rng.uniform(cfg.object_size_min, cfg.object_size_max);
      const double margin = size / 2.0 + 1.0;
      const double cx = rng.uniform(margin, scene.width - margin);
      const double cy = rng.uniform(margin, scene.height - margin);
      double rgb[3];
      for (int c = 0; c < 3; ++c)
        rgb[c] = std::clamp(
            detail::kClassColors[class_id][c] + rng.uniform(-0.08, 0.08), 0.0, 1.0);

      // probe bounding box against the overlap allowance before painting
      const labels::Box probe{
          static_cast<int>(std::floor(cx - size / 2.0)),
          static_cast<int>(std::floor(cy - size / 2.0)),
          static_cast<int>(std::ceil(cx + size / 2.0)),
          static_cast<int>(std::ceil(cy + size / 2.0)), class_id};
      if (cfg.overlap_allowance < 1.0 &&
          detail::box_overlap_fraction(probe, scene.boxes) > cfg.overlap_allowance)
        continue;

      detail::Painter painter{&scene};
      detail::draw_shape(painter, class_id, cx, cy, size, rgb);
      if (!painter.painted()) continue;
      scene.boxes.push_back(painter.tight_box(class_id));
      placed = true;
    }
    if (!placed) ++skipped;
  }
  if (dropped) *dropped = skipped;
  labels::normalize_boxes(scene);
  return scene;
}

/// Pixel-only domain shift; annotations pass through untouched.
/// Order: color shift, box blur, haze blend, additive noise, clamp.
inline labels::AnnotatedScene apply_domain_shift(const labels::AnnotatedScene& scene,
                                                 const ShiftParams& params, Rng& rng) {
  params.validate();
  labels::AnnotatedScene out = scene;
  if (params.is_identity()) return out;

  const std::size_t plane =
      static_cast<std::size_t>(scene.height) * scene.width;

  for (int c = 0; c < scene.channels; ++c) {
    double* chan = out.pixels.data() + static_cast<std::size_t>(c) * plane;
    const double shift = params.color_shift[c % 3];
    if (shift != 0.0)
      for (std::size_t p = 0; p < plane; ++p) chan[p] += shift;
  }

  if (params.blur_radius > 0) {
    const int r = params.blur_radius;
    std::vector<double> tmp(plane);
    for (int c = 0; c < scene.channels; ++c) {
      double* chan = out.pixels.data() + static_cast<std::size_t>(c) * plane;
      for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
          double acc = 0.0;
          int count = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || xx < 0 || yy >= scene.height || xx >= scene.width) continue;
              acc += chan[static_cast<std::size_t>(yy) * scene.width + xx];
              ++count;
            }
          tmp[static_cast<std::size_t>(y) * scene.width + x] = acc / count;
        }
      std::copy(tmp.begin(), tmp.end(), chan);
    }
  }

  if (params.haze_strength > 0.0) {
    const double h = params.haze_strength;
    for (int c = 0; c < scene.channels; ++c) {
      double* chan = out.pixels.data() + static_cast<std::size_t>(c) * plane;
      const double haze = params.haze_color[c % 3];
      for (std::size_t p = 0; p < plane; ++p)
        chan[p] = (1.0 - h) * chan[p] + h * haze;
    }
  }

  if (params.noise_sigma > 0.0) {
    for (int c = 0; c < scene.channels; ++c) {
      double* chan = out.pixels.data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t p = 0; p < plane; ++p)
        chan[p] += params.noise_sigma * rng.normal();
    }
  }

  for (auto& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

struct DatasetCounts {
  int source_train = 64;
  int target_train = 64;
  int source_val = 24;
  int target_val = 24;
};

/// Writes the four dataset splits (source/target x train/val) under `root`,
/// each as numbered PPMs plus annotations.jsonl. Target images are shifted
/// renders of independent scenes; their annotations are written too and it
/// is the training harness that refuses to read them.
inline void generate_dataset(const SceneConfig& cfg, const ShiftParams& shift,
                             const DatasetCounts& counts, const std::string& root) {
  namespace fs = std::filesystem;
  const Rng base(cfg.seed);
  struct Split {
    const char* name;
    int count;
    bool shifted;
  };
  const Split splits[] = {{"source_train", counts.source_train, false},
                          {"target_train", counts.target_train, true},
                          {"source_val", counts.source_val, false},
                          {"target_val", counts.target_val, true}};
  for (const auto& split : splits) {
    const fs::path dir = fs::path(root) / split.name;
    fs::create_directories(dir);
    std::vector<io::AnnotationRecord> records;
    for (int i = 0; i < split.count; ++i) {
      Rng scene_rng = base.child(split.name, static_cast<std::uint64_t>(i));
      labels::AnnotatedScene scene = generate_scene(cfg, scene_rng);
      if (split.shifted) {
        Rng shift_rng = base.child(std::string(split.name) + ".shift",
                                   static_cast<std::uint64_t>(i));
        scene = apply_domain_shift(scene, shift, shift_rng);
      }
      std::ostringstream name;
      name << std::setw(5) << std::setfill('0') << i << ".ppm";
      io::write_ppm(scene, (dir / name.str()).string());
      records.push_back({name.str(), scene.boxes});
    }
    io::write_annotations(records, (dir / "annotations.jsonl").string());
  }
}

}  // namespace scfam::synth
