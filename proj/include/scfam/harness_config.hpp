#pragma once

// Experiment configuration: one JSON document covering the backbone, the
// labeling threshold, loss weights, pooling, component toggles, optimizer
// schedule, batching, datasets, and probes. Every field has a default; a
// config file overrides only what it names (JSON merge-patch semantics in
// the ablation grid). Defaults keep zeta = 0.6 and 10x10 adaptive mean
// pooling.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scfam/losses.hpp"
#include "scfam/net.hpp"

namespace scfam::harness {

struct Toggles {
  bool mda = true;
  bool spm = true;
  bool sbc = true;
  bool asm_weights = true;  // semantic attention maps
  bool scr = true;

  void validate() const {
    if (sbc && !spm)
      throw std::invalid_argument("toggles: sbc requires spm");
    if (asm_weights && !spm)
      throw std::invalid_argument("toggles: asm requires spm");
    if (scr && !spm)
      throw std::invalid_argument("toggles: scr requires spm");
  }
};

struct OptimizerConfig {
  double lr = 1e-3;
  double lr_final = 1e-4;
  int iters_main = 2000;
  int iters_final = 500;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  int total_iters() const { return iters_main + iters_final; }
};

struct ProbeConfig {
  int scenes = 12;           // val scenes per domain fed to the probe
  int position_stride = 2;   // subsample of F2 positions
  int interval = 500;        // measure every this many iterations
  int hidden = 12;
  int epochs = 250;
  int restarts = 3;
  std::uint64_t seed = 555;
};

struct DataConfig {
  std::string source_train;
  std::string target_train;
  std::string source_val;
  std::string target_val;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int num_classes = 3;
  net::BackboneConfig backbone = [] {
    net::BackboneConfig b;
    b.image_channels = 3;
    b.layers = {{3, 1, 1, 8},  {3, 2, 1, 8},  {3, 1, 1, 16},
                {3, 2, 1, 16}, {3, 1, 1, 32}, {3, 2, 1, 32}};
    b.tap_f1 = 2;
    b.tap_f2 = 4;
    b.tap_f3 = 6;
    return b;
  }();
  double zeta = 0.6;
  int spm_trunk_depth = 2;
  int s1 = 16;
  int s2 = 16;
  int sg = 16;
  int disc_trunk_depth = 2;
  int disc_width = 16;
  int det_width = 32;
  losses::LossWeights loss_weights;
  int pool_h = 10;
  int pool_w = 10;
  Toggles toggles;
  OptimizerConfig optimizer;
  int batch_source = 4;
  int batch_target = 4;
  DataConfig data;
  ProbeConfig probe;
  int log_interval = 50;
  int eval_scenes = 24;
  std::string output_dir;

  void validate() const {
    backbone.validate();
    toggles.validate();
    loss_weights.validate();
    if (num_classes < 1) throw std::invalid_argument("config: classes must be >= 1");
    if (!(zeta > 0.0 && zeta <= 1.0))
      throw std::invalid_argument("config: zeta must be in (0,1]");
    if (pool_h < 1 || pool_w < 1)
      throw std::invalid_argument("config: pooling size must be positive");
    if (batch_source < 1 || batch_target < 0)
      throw std::invalid_argument("config: bad batch sizes");
    if (optimizer.iters_main < 0 || optimizer.iters_final < 0)
      throw std::invalid_argument("config: negative iteration counts");
    if (log_interval < 1) throw std::invalid_argument("config: log_interval must be >= 1");
  }

  net::NetConfig net_config() const {
    net::NetConfig n;
    n.backbone = backbone;
    n.num_classes = num_classes;
    n.spm_trunk_depth = spm_trunk_depth;
    n.s1 = s1;
    n.s2 = s2;
    n.sg = sg;
    n.disc_trunk_depth = disc_trunk_depth;
    n.disc_width = disc_width;
    n.det_width = det_width;
    n.with_spm = toggles.spm;
    n.with_sbc = toggles.spm && toggles.sbc;
    n.with_mda = toggles.mda;
    return n;
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j["seed"] = c.seed;
  j["classes"] = c.num_classes;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : c.backbone.layers)
    layers.push_back({{"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"channels", l.channels}});
  j["backbone"] = {{"image_channels", c.backbone.image_channels},
                   {"layers", layers},
                   {"taps",
                    {{"f1", c.backbone.tap_f1},
                     {"f2", c.backbone.tap_f2},
                     {"f3", c.backbone.tap_f3}}}};
  j["labeling"] = {{"zeta", c.zeta}};
  j["spm"] = {{"trunk_depth", c.spm_trunk_depth}, {"s1", c.s1}, {"s2", c.s2}, {"sg", c.sg}};
  j["discriminator"] = {{"trunk_depth", c.disc_trunk_depth}, {"width", c.disc_width}};
  j["det"] = {{"width", c.det_width}};
  j["loss"] = {{"lambda1", c.loss_weights.lambda1},
               {"lambda2", c.loss_weights.lambda2},
               {"lambda3", c.loss_weights.lambda3},
               {"gamma", c.loss_weights.gamma},
               {"eps_clamp", c.loss_weights.eps_clamp}};
  j["pooling"] = {{"h", c.pool_h}, {"w", c.pool_w}};
  j["toggles"] = {{"mda", c.toggles.mda},
                  {"spm", c.toggles.spm},
                  {"sbc", c.toggles.sbc},
                  {"asm", c.toggles.asm_weights},
                  {"scr", c.toggles.scr}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"lr_final", c.optimizer.lr_final},
                    {"iters_main", c.optimizer.iters_main},
                    {"iters_final", c.optimizer.iters_final},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["batch"] = {{"source", c.batch_source}, {"target", c.batch_target}};
  j["data"] = {{"source_train", c.data.source_train},
               {"target_train", c.data.target_train},
               {"source_val", c.data.source_val},
               {"target_val", c.data.target_val}};
  j["probe"] = {{"scenes", c.probe.scenes},
                {"position_stride", c.probe.position_stride},
                {"interval", c.probe.interval},
                {"hidden", c.probe.hidden},
                {"epochs", c.probe.epochs},
                {"restarts", c.probe.restarts},
                {"seed", c.probe.seed}};
  j["log_interval"] = c.log_interval;
  j["eval_scenes"] = c.eval_scenes;
  j["output_dir"] = c.output_dir;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.num_classes = j.value("classes", c.num_classes);
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    c.backbone.image_channels = b.value("image_channels", c.backbone.image_channels);
    if (b.contains("layers")) {
      c.backbone.layers.clear();
      for (const auto& l : b.at("layers"))
        c.backbone.layers.push_back({l.value("kernel", 3), l.value("stride", 1),
                                     l.value("padding", 1), l.value("channels", 8)});
    }
    if (b.contains("taps")) {
      c.backbone.tap_f1 = b.at("taps").value("f1", c.backbone.tap_f1);
      c.backbone.tap_f2 = b.at("taps").value("f2", c.backbone.tap_f2);
      c.backbone.tap_f3 = b.at("taps").value("f3", c.backbone.tap_f3);
    }
  }
  if (j.contains("labeling")) c.zeta = j.at("labeling").value("zeta", c.zeta);
  if (j.contains("spm")) {
    c.spm_trunk_depth = j.at("spm").value("trunk_depth", c.spm_trunk_depth);
    c.s1 = j.at("spm").value("s1", c.s1);
    c.s2 = j.at("spm").value("s2", c.s2);
    c.sg = j.at("spm").value("sg", c.sg);
  }
  if (j.contains("discriminator")) {
    c.disc_trunk_depth = j.at("discriminator").value("trunk_depth", c.disc_trunk_depth);
    c.disc_width = j.at("discriminator").value("width", c.disc_width);
  }
  if (j.contains("det")) c.det_width = j.at("det").value("width", c.det_width);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss_weights.lambda1 = l.value("lambda1", c.loss_weights.lambda1);
    c.loss_weights.lambda2 = l.value("lambda2", c.loss_weights.lambda2);
    c.loss_weights.lambda3 = l.value("lambda3", c.loss_weights.lambda3);
    c.loss_weights.gamma = l.value("gamma", c.loss_weights.gamma);
    c.loss_weights.eps_clamp = l.value("eps_clamp", c.loss_weights.eps_clamp);
  }
  if (j.contains("pooling")) {
    c.pool_h = j.at("pooling").value("h", c.pool_h);
    c.pool_w = j.at("pooling").value("w", c.pool_w);
  }
  if (j.contains("toggles")) {
    const auto& t = j.at("toggles");
    c.toggles.mda = t.value("mda", c.toggles.mda);
    c.toggles.spm = t.value("spm", c.toggles.spm);
    c.toggles.sbc = t.value("sbc", c.toggles.sbc);
    c.toggles.asm_weights = t.value("asm", c.toggles.asm_weights);
    c.toggles.scr = t.value("scr", c.toggles.scr);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.lr_final = o.value("lr_final", c.optimizer.lr_final);
    c.optimizer.iters_main = o.value("iters_main", c.optimizer.iters_main);
    c.optimizer.iters_final = o.value("iters_final", c.optimizer.iters_final);
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
  }
  if (j.contains("batch")) {
    c.batch_source = j.at("batch").value("source", c.batch_source);
    c.batch_target = j.at("batch").value("target", c.batch_target);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.data.source_train = d.value("source_train", c.data.source_train);
    c.data.target_train = d.value("target_train", c.data.target_train);
    c.data.source_val = d.value("source_val", c.data.source_val);
    c.data.target_val = d.value("target_val", c.data.target_val);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    c.probe.scenes = p.value("scenes", c.probe.scenes);
    c.probe.position_stride = p.value("position_stride", c.probe.position_stride);
    c.probe.interval = p.value("interval", c.probe.interval);
    c.probe.hidden = p.value("hidden", c.probe.hidden);
    c.probe.epochs = p.value("epochs", c.probe.epochs);
    c.probe.restarts = p.value("restarts", c.probe.restarts);
    c.probe.seed = p.value("seed", c.probe.seed);
  }
  c.log_interval = j.value("log_interval", c.log_interval);
  c.eval_scenes = j.value("eval_scenes", c.eval_scenes);
  c.output_dir = j.value("output_dir", c.output_dir);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot read " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  cfg.validate();
  return cfg;
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_config: cannot write " + path);
  out << nlohmann::json(cfg).dump(2) << "\n";
}

}  // namespace scfam::harness
