#include "clrm/nn/tensor.hpp"

#include <unordered_set>

#include "clrm/common/errors.hpp"

namespace clrm::nn {
namespace {
thread_local bool g_grad_enabled = true;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

int shape_size(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

Eigen::VectorXd& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Eigen::VectorXd::Zero(value.size());
  return grad;
}

Tensor Tensor::constant(Shape shape, Eigen::VectorXd values) {
  if (shape_size(shape) != values.size()) {
    throw ArgumentError("tensor: shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                        " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(n);
}

Tensor Tensor::zeros(Shape shape) {
  const int n = shape_size(shape);
  return constant(std::move(shape), Eigen::VectorXd::Zero(n));
}

Tensor Tensor::parameter(Shape shape, Eigen::VectorXd values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->is_parameter = true;
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) throw ArgumentError("tensor: axis out of range for " + shape_string(shape()));
  return node_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ArgumentError("tensor: item() on shape " + shape_string(shape()));
  return node_->value[0];
}

ConstMatrixMap Tensor::matrix() const {
  const int r = rank() == 2 ? node_->shape[0] : 1;
  const int c = rank() == 2 ? node_->shape[1] : size();
  if (rank() > 2) throw ArgumentError("tensor: matrix() on shape " + shape_string(shape()));
  return ConstMatrixMap(node_->value.data(), r, c);
}

void Tensor::backward() const {
  if (size() != 1) throw ArgumentError("backward: loss must be a scalar, got shape " + shape_string(shape()));
  if (!node_->requires_grad) throw StateError("backward: loss does not depend on any parameter");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_parameter) n->grad.resize(0);
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->is_parameter) continue;
    n->parents.clear();
    n->backward = nullptr;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(n);
}

}  // namespace clrm::nn
