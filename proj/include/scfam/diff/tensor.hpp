#pragma once

// Reverse-mode autodiff over dense double tensors.
//
// A Tensor is a shared handle to a graph node holding data, an optional
// gradient buffer, and a backward closure. Nodes carry a monotonically
// increasing sequence id; since an op's inputs always exist before its
// output, descending sequence order is a valid reverse-topological order,
// which is what backward() walks. A graph is meant to be built and
// differentiated on one thread; independent graphs can live on different
// threads (the sequence counter is atomic, and only relative order within
// one graph matters).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace scfam::diff {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized by backward(); empty until then
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Propagates this node's grad into its parents' grad buffers.
  std::function<void(Node&)> backward_fn;
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline bool& finite_checks_flag() {
  static bool enabled = false;
  return enabled;
}

}  // namespace detail

/// When enabled, every op validates its forward output is finite and throws
/// std::runtime_error naming the op otherwise.
inline void set_finite_checks(bool enabled) { detail::finite_checks_flag() = enabled; }
inline bool finite_checks_enabled() { return detail::finite_checks_flag(); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("Tensor::from_data: " + shape_str(shape) +
                                  " does not hold " + std::to_string(data.size()) +
                                  " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->seq = detail::next_seq();
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                     requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                     requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data(Shape{1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return shape_numel(node_->shape); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }

  /// Gradient buffer; populated by backward(), empty before the first call.
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  /// Value of a scalar (single-element) tensor.
  double value() const {
    if (numel() != 1)
      throw std::invalid_argument("Tensor::value: tensor " + shape_str(shape()) +
                                  " is not scalar");
    return node_->data[0];
  }

  /// Leaf copy sharing no graph linkage; gradients stop here.
  Tensor detached(bool requires_grad = false) const {
    return from_data(node_->shape, node_->data, requires_grad);
  }

  detail::NodePtr node() const { return node_; }

 private:
  detail::NodePtr node_;
};

/// Ordered record of the nodes reachable from a root, in reverse
/// topological (descending sequence) order. backward() visits each once.
struct GraphTape {
  std::vector<detail::NodePtr> order;
};

inline GraphTape build_tape(const Tensor& root) {
  GraphTape tape;
  std::vector<detail::NodePtr> found;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::NodePtr> work{root.node()};
  while (!work.empty()) {
    detail::NodePtr n = work.back();
    work.pop_back();
    if (!seen.insert(n.get()).second) continue;
    found.push_back(n);
    for (const auto& p : n->parents) work.push_back(p);
  }
  std::sort(found.begin(), found.end(),
            [](const detail::NodePtr& a, const detail::NodePtr& b) {
              return a->seq > b->seq;
            });
  tape.order = std::move(found);
  return tape;
}

/// Reverse pass from a scalar loss. Gradient buffers of every reachable node
/// are (re)initialized to zero and then accumulated, so each call reports
/// exactly this graph's gradients.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  GraphTape tape = build_tape(loss);
  for (auto& n : tape.order)
    n->grad.assign(n->data.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto& n : tape.order) {
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

namespace detail {

/// Shared op constructor: wires parents, sequence id, backward closure.
inline Tensor make_op(const char* op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool rg = false;
  node->parents.reserve(inputs.size());
  for (const auto& t : inputs) {
    node->parents.push_back(t.node());
    rg = rg || t.node()->requires_grad;
  }
  node->requires_grad = rg;
  if (rg) node->backward_fn = std::move(backward_fn);
  node->seq = next_seq();
  if (finite_checks_flag()) {
    for (double v : node->data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("non-finite value in forward op '") +
                                 op + "'");
      }
    }
  }
  return Tensor(std::move(node));
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << shape_str(a.shape()) << " vs "
       << shape_str(b.shape());
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

}  // namespace scfam::diff
