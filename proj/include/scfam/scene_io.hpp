#pragma once

// Scene serialization: binary PPM (P6, 8-bit) images and line-delimited JSON
// annotation records {"image": ..., "boxes": [{x0,y0,x1,y1,class}, ...]}.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scfam/semantic_labels.hpp"

namespace scfam::io {

inline std::uint8_t to_byte(double v) {
  const double scaled = v * 255.0 + 0.5;
  if (scaled <= 0.0) return 0;
  if (scaled >= 255.0) return 255;
  return static_cast<std::uint8_t>(scaled);
}

/// Writes channel-planar [0,1] pixels as interleaved 8-bit P6. Single
/// channel images are replicated to gray RGB.
inline void write_ppm(const labels::AnnotatedScene& scene, const std::string& path) {
  if (scene.channels != 1 && scene.channels != 3)
    throw std::invalid_argument("write_ppm: need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_ppm: cannot write " + path);
  out << "P6\n" << scene.width << " " << scene.height << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(scene.height) * scene.width;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(scene.width) * 3);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * scene.width + x;
      for (int c = 0; c < 3; ++c) {
        const int src = scene.channels == 3 ? c : 0;
        row[static_cast<std::size_t>(x) * 3 + c] =
            to_byte(scene.pixels[static_cast<std::size_t>(src) * plane + p]);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
}

/// Reads a P6 image into channel-planar [0,1] doubles (3 channels).
inline labels::AnnotatedScene read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot read " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not P6");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  in.get();  // single whitespace after header
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error("read_ppm: short read in " + path);

  labels::AnnotatedScene scene;
  scene.width = w;
  scene.height = h;
  scene.channels = 3;
  scene.pixels.resize(raw.size());
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      scene.pixels[static_cast<std::size_t>(c) * plane + p] =
          static_cast<double>(raw[p * 3 + static_cast<std::size_t>(c)]) / 255.0;
  return scene;
}

inline nlohmann::json boxes_to_json(const std::vector<labels::Box>& boxes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : boxes)
    arr.push_back({{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}, {"class", b.class_id}});
  return arr;
}

inline std::vector<labels::Box> boxes_from_json(const nlohmann::json& arr) {
  std::vector<labels::Box> boxes;
  for (const auto& j : arr)
    boxes.push_back({j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("x1").get<int>(),
                     j.at("y1").get<int>(), j.at("class").get<int>()});
  return boxes;
}

struct AnnotationRecord {
  std::string image;  // path relative to the annotation file
  std::vector<labels::Box> boxes;
};

inline void write_annotations(const std::vector<AnnotationRecord>& records,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_annotations: cannot write " + path);
  for (const auto& r : records) {
    nlohmann::json line;
    line["image"] = r.image;
    line["boxes"] = boxes_to_json(r.boxes);
    out << line.dump() << "\n";
  }
}

inline std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_annotations: cannot read " + path);
  std::vector<AnnotationRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    AnnotationRecord r;
    r.image = j.at("image").get<std::string>();
    r.boxes = boxes_from_json(j.at("boxes"));
    records.push_back(std::move(r));
  }
  return records;
}

/// Loads a dataset directory: annotations.jsonl plus the PPMs it names.
inline std::vector<labels::AnnotatedScene> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto ann_path = fs::path(dir) / "annotations.jsonl";
  const auto records = read_annotations(ann_path.string());
  std::vector<labels::AnnotatedScene> scenes;
  scenes.reserve(records.size());
  for (const auto& r : records) {
    labels::AnnotatedScene scene = read_ppm((fs::path(dir) / r.image).string());
    scene.boxes = r.boxes;
    labels::normalize_boxes(scene);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace scfam::io
