#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace clrm::nn {

using Shape = std::vector<int>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::string shape_string(const Shape& shape);
int shape_size(const Shape& shape);

/// Graph node: value, gradient slot and the rule that pushes its gradient to its parents.
struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;  ///< allocated lazily during backward
  bool requires_grad = false;
  bool is_parameter = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Eigen::VectorXd& grad_buffer();
};

/// Handle to a node. Values are row-major; a 2D tensor [r, c] maps onto a
/// row-major r x c matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, Eigen::VectorXd values);
  static Tensor zeros(Shape shape);
  /// A leaf that accumulates gradients.
  static Tensor parameter(Shape shape, Eigen::VectorXd values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int size() const { return static_cast<int>(node_->value.size()); }
  const Eigen::VectorXd& value() const { return node_->value; }
  Eigen::VectorXd& mutable_value() { return node_->value; }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  /// Row-major matrix view of a rank-2 tensor (rank-1 is viewed as one row).
  ConstMatrixMap matrix() const;

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Reverse-mode sweep from this scalar. Parameter gradients accumulate;
  /// the intermediate graph is released afterwards.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Creates an op result. Records parents and the backward rule only when
/// recording is enabled and some parent requires a gradient.
Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

}  // namespace clrm::nn
