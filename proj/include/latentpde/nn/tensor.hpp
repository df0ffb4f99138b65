#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace latentpde::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents
};

/// Handle to a node of the dynamic graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<double> values) {
    if (values.size() != numel(shape))
      throw std::invalid_argument("Tensor: " + std::to_string(values.size()) + " values for shape " + nn::to_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(n);
  }
  static Tensor zeros(Shape shape) {
    const std::size_t k = numel(shape);
    return constant(std::move(shape), std::vector<double>(k, 0.0));
  }
  /// Leaf that accumulates gradients (a trainable parameter).
  static Tensor parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.n_->requires_grad = true;
    t.n_->grad.assign(t.n_->value.size(), 0.0);
    return t;
  }

  [[nodiscard]] bool defined() const noexcept { return n_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return n_->shape; }
  [[nodiscard]] int dim(std::size_t i) const { return n_->shape.at(i); }
  [[nodiscard]] std::size_t rank() const { return n_->shape.size(); }
  [[nodiscard]] std::size_t size() const { return n_->value.size(); }
  [[nodiscard]] std::vector<double>& value() { return n_->value; }
  [[nodiscard]] const std::vector<double>& value() const { return n_->value; }
  [[nodiscard]] std::vector<double>& grad() { return n_->grad; }
  [[nodiscard]] const std::vector<double>& grad() const { return n_->grad; }
  [[nodiscard]] bool requires_grad() const { return n_->requires_grad; }
  [[nodiscard]] double item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item on shape " + nn::to_string(shape()));
    return n_->value[0];
  }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return n_; }

  void zero_grad() {
    if (n_->requires_grad) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  /// Reverse sweep from this scalar (seed gradient 1) through every tracked ancestor.
  void backward() const {
    if (size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + nn::to_string(shape()));
    if (!n_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* node : order)
      if (node->backward) std::fill(node->grad.begin(), node->grad.end(), 0.0);
    n_->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward) (*it)->backward(**it);
  }

 private:
  std::shared_ptr<Node> n_;
};

/// Creates the output node of an op; it is tracked when any input is.
inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& t : inputs) n->requires_grad |= t.requires_grad();
  if (n->requires_grad) {
    n->grad.assign(n->value.size(), 0.0);
    for (auto& t : inputs) n->parents.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(n);
}

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw std::invalid_argument(std::string(what) + ": shape " + to_string(t.shape()) + " vs expected " + to_string(expected));
}

inline void require_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r)
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(r) + ", got shape " + to_string(t.shape()));
}

}  // namespace latentpde::nn
