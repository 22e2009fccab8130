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

#include "dere/st_graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "dere/error.hpp"

namespace dere {

std::string to_string(Component c) {
  switch (c) {
    case Component::eyebrow: return "eyebrow";
    case Component::nose: return "nose";
    case Component::mouth: return "mouth";
  }
  return "?";
}

std::vector<int> NodeSelection::nodes_of(Component c) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (component_of[static_cast<std::size_t>(i)] == c) out.push_back(i);
  return out;
}

int NodeSelection::component_size(Component c) const {
  return static_cast<int>(std::count(component_of.begin(), component_of.end(), c));
}

NodeSelection default_selection() {
  NodeSelection s;
  auto add_range = [&s](int first, int last, Component c) {
    for (int i = first; i <= last; ++i) {
      s.indices.push_back(i);
      s.component_of.push_back(c);
    }
  };
  add_range(17, 26, Component::eyebrow);
  add_range(27, 35, Component::nose);
  add_range(48, 59, Component::mouth);
  return s;
}

Matrix template_adjacency(const NodeSelection& selection) {
  const int n = selection.size();
  Matrix a = Matrix::Identity(n, n);
  auto node = [&selection](int landmark) {
    const auto it = std::find(selection.indices.begin(), selection.indices.end(), landmark);
    return it == selection.indices.end() ? -1 : static_cast<int>(it - selection.indices.begin());
  };
  auto link = [&](int p, int q) {
    const int i = node(p), j = node(q);
    if (i < 0 || j < 0) return;
    a(i, j) = a(j, i) = 1.0;
  };
  auto chain = [&](int first, int last) {
    for (int i = first; i < last; ++i) link(i, i + 1);
  };
  chain(17, 21);  // right brow
  chain(22, 26);  // left brow
  link(21, 22);
  chain(27, 30);  // bridge
  chain(31, 35);  // nostrils
  link(30, 33);
  chain(48, 59);  // outer lip
  link(59, 48);
  link(21, 27);  // eyebrow <-> nose
  link(22, 27);
  link(33, 51);  // nose <-> mouth
  return a;
}

std::array<SubGraph, 3> split_graph(const Matrix& a_plus_i, const NodeSelection& selection) {
  std::array<SubGraph, 3> out;
  for (Component c : kComponents) {
    auto& sg = out[static_cast<std::size_t>(c)];
    sg.component = c;
    sg.nodes = selection.nodes_of(c);
    const auto n = static_cast<Eigen::Index>(sg.nodes.size());
    Matrix sub(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        sub(i, j) = a_plus_i(sg.nodes[static_cast<std::size_t>(i)],
                             sg.nodes[static_cast<std::size_t>(j)]);
    sub.diagonal().setOnes();
    sg.adjacency = normalize_adjacency(sub);
  }
  return out;
}

StGraph build_graph(const LandmarkSample& sample, const NodeSelection& selection,
                    const GraphOptions& options) {
  StGraph g;
  g.label = sample.label;
  g.subject = sample.subject;
  g.adjacency = normalize_adjacency(template_adjacency(selection));
  const int n = selection.size();
  for (int f = 0; f < kNumKeyframes; ++f) {
    Matrix x(n, 2);
    for (int i = 0; i < n; ++i)
      x.row(i) = sample.frames[static_cast<std::size_t>(f)].row(selection.indices[static_cast<std::size_t>(i)]);
    g.node_features[static_cast<std::size_t>(f)] = std::move(x);
  }
  const Matrix& onset = g.node_features[0];
  const Eigen::RowVector2d centroid = onset.colwise().mean();
  const double rms = std::sqrt((onset.rowwise() - centroid).rowwise().squaredNorm().mean());
  if (!(rms > 0) || !std::isfinite(rms))
    throw ValidationError("build_graph: degenerate onset frame for subject " + sample.subject);
  if (options.normalize_coordinates)
    for (auto& x : g.node_features) x = (x.rowwise() - centroid) / rms;
  for (const auto& x : g.node_features)
    if (!x.allFinite())
      throw ValidationError("build_graph: non-finite node features for subject " + sample.subject);
  return g;
}

std::array<Matrix, 2> temporal_displacements(const StGraph& graph) {
  return {graph.node_features[1] - graph.node_features[0],
          graph.node_features[2] - graph.node_features[1]};
}

std::array<Matrix, 3> split_components(const Matrix& features, const NodeSelection& selection) {
  if (features.rows() != selection.size())
    throw ShapeError("split_components: expected " + std::to_string(selection.size()) +
                     " rows, got " + std::to_string(features.rows()));
  std::array<Matrix, 3> out;
  for (Component c : kComponents) {
    const auto nodes = selection.nodes_of(c);
    Matrix part(static_cast<Eigen::Index>(nodes.size()), features.cols());
    for (std::size_t i = 0; i < nodes.size(); ++i)
      part.row(static_cast<Eigen::Index>(i)) = features.row(nodes[i]);
    out[static_cast<std::size_t>(c)] = std::move(part);
  }
  return out;
}

Matrix merge_components(const std::array<Matrix, 3>& parts, const NodeSelection& selection) {
  const auto cols = parts[0].cols();
  Matrix out(selection.size(), cols);
  for (Component c : kComponents) {
    const auto nodes = selection.nodes_of(c);
    const auto& part = parts[static_cast<std::size_t>(c)];
    if (part.rows() != static_cast<Eigen::Index>(nodes.size()) || part.cols() != cols)
      throw ShapeError("merge_components: " + to_string(c) + " part has wrong shape");
    for (std::size_t i = 0; i < nodes.size(); ++i)
      out.row(nodes[i]) = part.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace dere
