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

#ifndef DERE_OPS_HPP_
#define DERE_OPS_HPP_

#include <span>
#include <vector>

#include "dere/tensor.hpp"

namespace dere::ad {

// Differentiable tensor operations. Every op checks shapes and throws
// ShapeError naming the op and the offending shapes.
//
// Several ops take a `block` row count: the input is treated as a stack of
// equally sized row blocks (one block per sample) and the op is applied to
// each block independently.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// a (r x c) + bias (1 x c), bias broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, Scalar s);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// out[i] = sum_j |a[i, j]|, shape (r, 1).
Tensor l1_rowsum(const Tensor& a);
/// Sum of squares of all entries, shape (1, 1).
Tensor sq_frobenius(const Tensor& a);
Tensor sum(const Tensor& a);
/// Mean of the rows in each block of `block` rows: (B*block, c) -> (B, c).
/// block == 0 means the whole tensor is one block.
Tensor mean_over_batch(const Tensor& a, Index block = 0);
Tensor concat_rows(std::span<const Tensor> parts);
/// out.row(k) = a.row(rows[k]); backward scatters (indices may repeat).
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
Tensor reshape(const Tensor& a, Index rows, Index cols);

/// Per block: adj * x_block, with a constant (n x n) adjacency and block = n.
Tensor propagate(const Matrix& adjacency, const Tensor& x);
/// Per block b: m_b^T * x_b where m_b is (block x p) and x_b is (block x c);
/// output is (B*p, c).
Tensor block_transpose_matmul(const Tensor& m, const Tensor& x, Index block);
/// Per block of a column vector: w_b / sum(w_b). Blocks summing to zero are
/// replaced by the uniform vector (no gradient flows through them).
Tensor normalize_blocks(const Tensor& w, Index block, int* zero_blocks = nullptr);
/// Mean softmax cross-entropy of (N x K) logits against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace dere::ad

#endif  // DERE_OPS_HPP_
