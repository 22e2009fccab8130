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

#include "dere/ops.hpp"

#include <cmath>
#include <string>

#include "dere/error.hpp"

namespace dere::ad {
namespace {

bool wants(const Node& n, std::size_t i) { return n.parents[i]->requires_grad; }
Matrix& pgrad(Node& n, std::size_t i) { return n.parents[i]->grad; }
const Matrix& pval(const Node& n, std::size_t i) { return n.parents[i]->value; }

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

void check_block(const char* op, const Tensor& a, Index block) {
  if (block <= 0 || a.rows() % block != 0)
    throw ShapeError(std::string(op) + ": " + std::to_string(a.rows()) +
                     " rows are not a multiple of block " + std::to_string(block));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out = a.value() * b.value();
  return Tensor::from_op("matmul", std::move(out), {a, b}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0).noalias() += n.grad * pval(n, 1).transpose();
    if (wants(n, 1)) pgrad(n, 1).noalias() += pval(n, 0).transpose() * n.grad;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a, b);
  return Tensor::from_op("add", a.value() + b.value(), {a, b}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0) += n.grad;
    if (wants(n, 1)) pgrad(n, 1) += n.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
  return Tensor::from_op("sub", a.value() - b.value(), {a, b}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0) += n.grad;
    if (wants(n, 1)) pgrad(n, 1) -= n.grad;
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_fail("add_row", a, bias);
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return Tensor::from_op("add_row", std::move(out), {a, bias}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0) += n.grad;
    if (wants(n, 1)) pgrad(n, 1) += n.grad.colwise().sum();
  });
}

Tensor scale(const Tensor& a, Scalar s) {
  return Tensor::from_op("scale", a.value() * s, {a}, [s](Node& n) {
    if (wants(n, 0)) pgrad(n, 0) += s * n.grad;
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return Tensor::from_op("relu", std::move(out), {a}, [](Node& n) {
    if (wants(n, 0))
      pgrad(n, 0).array() += (pval(n, 0).array() > 0.0).select(n.grad.array(), 0.0);
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix out = (a.value().colwise() - a.value().rowwise().maxCoeff()).array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return Tensor::from_op("softmax_rows", std::move(out), {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    // dx = y * (g - rowsum(g * y))
    Eigen::VectorXd dot = (n.grad.array() * n.value.array()).rowwise().sum();
    pgrad(n, 0).array() += n.value.array() * (n.grad.colwise() - dot).array();
  });
}

Tensor l1_rowsum(const Tensor& a) {
  Matrix out = a.value().cwiseAbs().rowwise().sum();
  return Tensor::from_op("l1_rowsum", std::move(out), {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    Matrix sign = pval(n, 0).unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); });
    pgrad(n, 0).array() += sign.array().colwise() * n.grad.col(0).array();
  });
}

Tensor sq_frobenius(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return Tensor::from_op("sq_frobenius", std::move(out), {a}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0) += (2.0 * n.grad(0, 0)) * pval(n, 0);
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::from_op("sum", std::move(out), {a}, [](Node& n) {
    if (wants(n, 0)) pgrad(n, 0).array() += n.grad(0, 0);
  });
}

Tensor mean_over_batch(const Tensor& a, Index block) {
  if (block == 0) block = a.rows();
  check_block("mean_over_batch", a, block);
  const Index blocks = a.rows() / block;
  Matrix out(blocks, a.cols());
  for (Index b = 0; b < blocks; ++b)
    out.row(b) = a.value().middleRows(b * block, block).colwise().mean();
  return Tensor::from_op("mean_over_batch", std::move(out), {a}, [block, blocks](Node& n) {
    if (!wants(n, 0)) return;
    const Scalar inv = 1.0 / static_cast<Scalar>(block);
    for (Index b = 0; b < blocks; ++b)
      pgrad(n, 0).middleRows(b * block, block).rowwise() += inv * n.grad.row(b);
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) shape_fail("concat_rows", parts[0], p);
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    offsets.push_back(r);
    r += p.rows();
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::from_op("concat_rows", std::move(out), std::move(parents),
                         [offsets](Node& n) {
                           for (std::size_t i = 0; i < n.parents.size(); ++i)
                             if (wants(n, i))
                               pgrad(n, i) += n.grad.middleRows(offsets[i], pval(n, i).rows());
                         });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows())
      throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range for " +
                       a.shape_str());
    out.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return Tensor::from_op("gather_rows", std::move(out), {a}, [idx](Node& n) {
    if (!wants(n, 0)) return;
    for (std::size_t k = 0; k < idx.size(); ++k)
      pgrad(n, 0).row(idx[k]) += n.grad.row(static_cast<Index>(k));
  });
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  if (rows * cols != a.size())
    throw ShapeError("reshape: cannot view " + a.shape_str() + " as (" + std::to_string(rows) +
                     ", " + std::to_string(cols) + ")");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return Tensor::from_op("reshape", std::move(out), {a}, [](Node& n) {
    if (!wants(n, 0)) return;
    auto& g = pgrad(n, 0);
    Eigen::Map<Matrix>(g.data(), n.grad.rows(), n.grad.cols()) += n.grad;
  });
}

Tensor propagate(const Matrix& adjacency, const Tensor& x) {
  const Index block = adjacency.rows();
  if (adjacency.cols() != block) throw ShapeError("propagate: adjacency must be square");
  check_block("propagate", x, block);
  const Index blocks = x.rows() / block;
  Matrix out(x.rows(), x.cols());
  for (Index b = 0; b < blocks; ++b)
    out.middleRows(b * block, block).noalias() = adjacency * x.value().middleRows(b * block, block);
  return Tensor::from_op("propagate", std::move(out), {x}, [adjacency, block, blocks](Node& n) {
    if (!wants(n, 0)) return;
    for (Index b = 0; b < blocks; ++b)
      pgrad(n, 0).middleRows(b * block, block).noalias() +=
          adjacency.transpose() * n.grad.middleRows(b * block, block);
  });
}

Tensor block_transpose_matmul(const Tensor& m, const Tensor& x, Index block) {
  check_block("block_transpose_matmul", m, block);
  if (m.rows() != x.rows()) shape_fail("block_transpose_matmul", m, x);
  const Index blocks = m.rows() / block;
  const Index p = m.cols();
  Matrix out(blocks * p, x.cols());
  for (Index b = 0; b < blocks; ++b)
    out.middleRows(b * p, p).noalias() =
        m.value().middleRows(b * block, block).transpose() * x.value().middleRows(b * block, block);
  return Tensor::from_op(
      "block_transpose_matmul", std::move(out), {m, x}, [block, blocks, p](Node& n) {
        for (Index b = 0; b < blocks; ++b) {
          const auto g = n.grad.middleRows(b * p, p);
          if (wants(n, 0))
            pgrad(n, 0).middleRows(b * block, block).noalias() +=
                pval(n, 1).middleRows(b * block, block) * g.transpose();
          if (wants(n, 1))
            pgrad(n, 1).middleRows(b * block, block).noalias() +=
                pval(n, 0).middleRows(b * block, block) * g;
        }
      });
}

Tensor normalize_blocks(const Tensor& w, Index block, int* zero_blocks) {
  if (w.cols() != 1) throw ShapeError("normalize_blocks: expected a column, got " + w.shape_str());
  check_block("normalize_blocks", w, block);
  const Index blocks = w.rows() / block;
  Matrix out(w.rows(), 1);
  std::vector<Scalar> sums(static_cast<std::size_t>(blocks));
  int zeros = 0;
  for (Index b = 0; b < blocks; ++b) {
    const Scalar s = w.value().middleRows(b * block, block).sum();
    sums[static_cast<std::size_t>(b)] = s;
    if (s == 0.0) {
      out.middleRows(b * block, block).setConstant(1.0 / static_cast<Scalar>(block));
      ++zeros;
    } else {
      out.middleRows(b * block, block) = w.value().middleRows(b * block, block) / s;
    }
  }
  if (zero_blocks) *zero_blocks = zeros;
  return Tensor::from_op("normalize_blocks", std::move(out), {w}, [block, blocks, sums](Node& n) {
    if (!wants(n, 0)) return;
    for (Index b = 0; b < blocks; ++b) {
      const Scalar s = sums[static_cast<std::size_t>(b)];
      if (s == 0.0) continue;
      const auto g = n.grad.middleRows(b * block, block);
      const auto y = n.value.middleRows(b * block, block);
      // d(w_i / s)/dw_j = (delta_ij - y_i) / s
      const Scalar gy = g.cwiseProduct(y).sum();
      pgrad(n, 0).middleRows(b * block, block).array() += (g.array() - gy) / s;
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const Index rows = logits.rows();
  const Index k = logits.cols();
  if (rows == 0 || static_cast<Index>(labels.size()) != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape_str());
  for (int l : labels)
    if (l < 0 || l >= k)
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(l) +
                            " outside [0, " + std::to_string(k) + ")");
  const Matrix& z = logits.value();
  Eigen::VectorXd mx = z.rowwise().maxCoeff();
  Matrix prob = (z.colwise() - mx).array().exp();
  Eigen::VectorXd norm = prob.rowwise().sum();
  prob.array().colwise() /= norm.array();
  Scalar total = 0.0;
  for (Index i = 0; i < rows; ++i)
    total += mx(i) + std::log(norm(i)) - z(i, labels[static_cast<std::size_t>(i)]);
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(rows);
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor::from_op("softmax_cross_entropy", std::move(out), {logits},
                         [prob = std::move(prob), lab](Node& n) {
                           if (!wants(n, 0)) return;
                           Matrix d = prob;
                           for (std::size_t i = 0; i < lab.size(); ++i)
                             d(static_cast<Index>(i), lab[i]) -= 1.0;
                           pgrad(n, 0) += (n.grad(0, 0) / static_cast<Scalar>(lab.size())) * d;
                         });
}

}  // namespace dere::ad
