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

#ifndef DERE_ST_GRAPH_HPP_
#define DERE_ST_GRAPH_HPP_

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dere/landmark_data.hpp"
#include "dere/tensor.hpp"

namespace dere {

using ad::Matrix;

enum class Component : int { eyebrow = 0, nose = 1, mouth = 2 };
inline constexpr std::array<Component, 3> kComponents = {Component::eyebrow, Component::nose,
                                                         Component::mouth};
inline constexpr int kNumGraphNodes = 31;

std::string to_string(Component c);

/// The 31 key landmarks and their facial component. Nodes are stored in
/// canonical order: all eyebrow nodes, then nose, then mouth.
struct NodeSelection {
  std::vector<int> indices;           // into the 68-point layout
  std::vector<Component> component_of;  // per node

  int size() const { return static_cast<int>(indices.size()); }
  /// Node positions (0..30) belonging to component `c`, in node order.
  std::vector<int> nodes_of(Component c) const;
  int component_size(Component c) const;
};

/// Eyebrows 17-26, nose 27-35, outer lip contour 48-59.
NodeSelection default_selection();

/// A + I over the selected nodes: contour chains within each component,
/// bridges between neighbouring components, and self-loops.
Matrix template_adjacency(const NodeSelection& selection);

/// D^{-1/2} M D^{-1/2} with D the row sums of M. Every row sum must be
/// positive.
template <typename Derived>
Matrix normalize_adjacency(const Eigen::MatrixBase<Derived>& a_plus_i) {
  const Eigen::VectorXd d = a_plus_i.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = d.array().rsqrt();
  return inv_sqrt.asDiagonal() * a_plus_i * inv_sqrt.asDiagonal();
}

/// Spatial-temporal graph of one sample. Temporal links are implicit: node i
/// of frame t corresponds to node i of frames t - 1 and t + 1.
struct StGraph {
  Matrix adjacency;  // normalized, 31 x 31, shared by all frames
  std::array<Matrix, kNumKeyframes> node_features;  // 31 x 2 per frame
  int label = 0;
  std::string subject;
};

/// Induced sub-graph of one component, self-loops added and renormalized.
struct SubGraph {
  Component component = Component::eyebrow;
  Matrix adjacency;
  std::vector<int> nodes;  // positions in the parent graph
};

std::array<SubGraph, 3> split_graph(const Matrix& a_plus_i, const NodeSelection& selection);

struct GraphOptions {
  /// Subtract the onset centroid and divide by the onset RMS radius.
  bool normalize_coordinates = true;
};

StGraph build_graph(const LandmarkSample& sample, const NodeSelection& selection,
                    const GraphOptions& options = {});

/// Frame-to-frame coordinate deltas (apex - onset, offset - apex).
std::array<Matrix, 2> temporal_displacements(const StGraph& graph);

/// Splits a (31 x c) feature matrix into its eyebrow, nose and mouth rows.
std::array<Matrix, 3> split_components(const Matrix& features, const NodeSelection& selection);
/// Inverse of split_components.
Matrix merge_components(const std::array<Matrix, 3>& parts, const NodeSelection& selection);

}  // namespace dere

#endif  // DERE_ST_GRAPH_HPP_
