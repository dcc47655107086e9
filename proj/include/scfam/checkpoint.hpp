#pragma once

// Weight checkpoints: a flat little-endian float64 archive (<base>.bin) plus
// a JSON manifest (<base>.json) holding names, shapes, and byte offsets.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scfam/diff/tensor.hpp"

namespace scfam {

using NamedTensors = std::vector<std::pair<std::string, diff::Tensor>>;

inline void save_checkpoint(const NamedTensors& tensors,
                            const std::string& path_base) {
  nlohmann::json manifest;
  manifest["format"] = "scfam-tensors-v1";
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  manifest["tensors"] = nlohmann::json::array();

  std::ofstream bin(path_base + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot write " + path_base + ".bin");
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["offset"] = offset;
    entry["count"] = tensor.data().size();
    manifest["tensors"].push_back(entry);
    bin.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.data().size() * sizeof(double)));
    offset += tensor.data().size() * sizeof(double);
  }
  bin.close();

  std::ofstream mf(path_base + ".json", std::ios::trunc);
  if (!mf) throw std::runtime_error("save_checkpoint: cannot write " + path_base + ".json");
  mf << manifest.dump(2) << "\n";
}

/// Loads values into the given registry; every manifest entry must match an
/// existing tensor by name and shape.
inline void load_checkpoint(NamedTensors& tensors, const std::string& path_base) {
  std::ifstream mf(path_base + ".json");
  if (!mf) throw std::runtime_error("load_checkpoint: cannot read " + path_base + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.value("format", "") != "scfam-tensors-v1")
    throw std::runtime_error("load_checkpoint: unknown format in " + path_base + ".json");

  std::ifstream bin(path_base + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: cannot read " + path_base + ".bin");

  for (const auto& entry : manifest["tensors"]) {
    const std::string name = entry["name"];
    diff::Tensor* target = nullptr;
    for (auto& [n, t] : tensors)
      if (n == name) {
        target = &t;
        break;
      }
    if (!target)
      throw std::runtime_error("load_checkpoint: tensor '" + name + "' not in model");
    const diff::Shape shape = entry["shape"].get<diff::Shape>();
    if (shape != target->shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "': file " +
                               diff::shape_str(shape) + " vs model " +
                               diff::shape_str(target->shape()));
    const std::uint64_t offset = entry["offset"];
    const std::size_t count = entry["count"];
    if (count != target->data().size())
      throw std::runtime_error("load_checkpoint: element count mismatch for '" + name + "'");
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(target->data().data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!bin)
      throw std::runtime_error("load_checkpoint: short read for '" + name + "'");
  }
}

}  // namespace scfam
