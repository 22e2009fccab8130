// Copyright 2026 The dere Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DERE_TENSOR_HPP_
#define DERE_TENSOR_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dere::ad {

using Scalar = double;
using Index = Eigen::Index;
/// Row-major dense storage, so reshape keeps the flat order.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. `backward` reads `grad` and
/// accumulates into the parents' `grad`.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
};

/// Handle to a 2-D array participating in reverse-mode differentiation.
///
/// Tensors share their node; copying a Tensor aliases the same storage, which
/// is what lets a parameter be read by many ops in one graph. Values that
/// are logically rank-3 (batches of matrices) are stored as row blocks.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(Scalar v, bool requires_grad = false);

  /// Records an op result. Parents that do not require grad are dropped, and
  /// if none remain the result is a constant and `backward` is discarded.
  static Tensor from_op(std::string op, Matrix value, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  /// Direct write access. Used by optimizers and finite-difference probes.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& op() const { return node_->op; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::string shape_str() const;

  /// Value of a 1x1 tensor.
  Scalar item() const;
  void zero_grad();
  /// A constant tensor holding a copy of the current value.
  Tensor detach() const { return Tensor(node_->value); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Back-propagates from a scalar. Leaf gradients accumulate across calls
/// until zeroed; intermediate gradients are recomputed each call.
void backward(const Tensor& loss);

/// True when every entry is finite.
bool all_finite(const Matrix& m);

}  // namespace dere::ad

#endif  // DERE_TENSOR_HPP_
