#pragma once

// SGD with classical momentum and decoupled-from-nothing L2 weight decay:
//   v <- mu v + (g + wd w);  w <- w - lr v

#include <unordered_map>
#include <vector>

#include "scfam/checkpoint.hpp"
#include "scfam/diff/tensor.hpp"

namespace scfam {

class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  /// One update over the registry; parameters without a populated gradient
  /// (not reachable from the last loss) are left untouched.
  void step(NamedTensors& params) {
    for (auto& [name, t] : params) {
      if (t.grad().empty()) continue;
      auto& v = velocity_[name];
      if (v.size() != t.data().size()) v.assign(t.data().size(), 0.0);
      auto& w = t.data();
      const auto& g = t.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i] + weight_decay_ * w[i];
        w[i] -= lr_ * v[i];
      }
    }
  }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::unordered_map<std::string, std::vector<double>> velocity_;
};

}  // namespace scfam
