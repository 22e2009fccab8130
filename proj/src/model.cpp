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

#include "dere/model.hpp"

#include <cmath>
#include <random>

#include "dere/error.hpp"

namespace dere {

using ad::Index;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::backbone_only: return "backbone";
    case Variant::backbone_adm: return "backbone+adm";
    case Variant::full: return "backbone+adm+rrm";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "backbone" || s == "backbone_only") return Variant::backbone_only;
  if (s == "backbone+adm" || s == "backbone_adm") return Variant::backbone_adm;
  if (s == "backbone+adm+rrm" || s == "full") return Variant::full;
  throw ConfigError("unknown variant: " + s);
}

void ModelConfig::validate() const {
  if (hidden_channels < 1 || feature_channels < 1)
    throw ConfigError("model: channel counts must be positive");
  if (num_actions < 2) throw ConfigError("model: num_actions must be >= 2");
  if (relation_channels < 1) throw ConfigError("model: relation_channels must be >= 1");
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden_channels", c.hidden_channels},     {"feature_channels", c.feature_channels},
       {"num_actions", c.num_actions},             {"relation_channels", c.relation_channels},
       {"num_classes", c.num_classes},             {"normalize_weights", c.normalize_weights},
       {"share_adm_params", c.share_adm_params},   {"variant", to_string(c.variant)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.feature_channels = j.value("feature_channels", c.feature_channels);
  c.num_actions = j.value("num_actions", c.num_actions);
  c.relation_channels = j.value("relation_channels", c.relation_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.normalize_weights = j.value("normalize_weights", c.normalize_weights);
  c.share_adm_params = j.value("share_adm_params", c.share_adm_params);
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
}

Tensor graph_conv(const Matrix& adjacency, const Tensor& x, const Tensor& weight,
                  const Tensor& bias) {
  return ad::relu(ad::add_row(ad::matmul(ad::propagate(adjacency, x), weight), bias));
}

std::vector<Tensor> temporal_conv(std::span<const Tensor> frames, std::span<const Tensor> taps,
                                  const Tensor& bias, bool same) {
  const auto t_in = static_cast<int>(frames.size());
  const auto width = static_cast<int>(taps.size());
  if (width % 2 != 1) throw ConfigError("temporal_conv: kernel width must be odd");
  if (!same && t_in != width)
    throw ShapeError("temporal_conv: valid mode needs exactly " + std::to_string(width) +
                     " frames");
  const int half = width / 2;
  const int t_out = same ? t_in : 1;
  std::vector<Tensor> out;
  for (int t = 0; t < t_out; ++t) {
    const int centre = same ? t : half;
    Tensor acc;
    for (int k = 0; k < width; ++k) {
      const int src = centre + k - half;
      if (src < 0 || src >= t_in) continue;
      Tensor term = ad::matmul(frames[static_cast<std::size_t>(src)], taps[static_cast<std::size_t>(k)]);
      acc = acc.defined() ? ad::add(acc, term) : term;
    }
    out.push_back(ad::add_row(acc, bias));
  }
  return out;
}

namespace {

// He-uniform: keeps activation variance through ReLU layers
Matrix he_uniform(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

DereModel::DereModel(const ModelConfig& config, std::uint64_t seed,
                     const NodeSelection& selection)
    : config_(config), selection_(selection) {
  config_.validate();
  if (selection_.size() != kNumGraphNodes)
    throw ConfigError("model: node selection must have 31 nodes");
  const Matrix a_plus_i = template_adjacency(selection_);
  adjacency_ = normalize_adjacency(a_plus_i);
  subgraphs_ = split_graph(a_plus_i, selection_);
  const Index m = config_.total_actions();
  relation_adjacency_ = normalize_adjacency(Matrix::Ones(m, m));

  std::mt19937_64 rng(seed);
  const Index h = config_.hidden_channels;
  const Index c1 = config_.feature_channels;
  const Index c2 = config_.relation_channels;
  auto dense = [&](const std::string& prefix, Index in, Index out) {
    params_.add(prefix + ".weight", he_uniform(in, out, in, rng));
    params_.add(prefix + ".bias", Matrix::Zero(1, out));
  };
  auto temporal = [&](const std::string& prefix, Index ch) {
    for (int k = 0; k < 3; ++k)
      params_.add(prefix + ".weight." + std::to_string(k), he_uniform(ch, ch, 3 * ch, rng));
    params_.add(prefix + ".bias", Matrix::Zero(1, ch));
  };
  dense("backbone.0.gc", 2, h);
  temporal("backbone.0.tc", h);
  dense("backbone.1.gc", h, c1);
  temporal("backbone.1.tc", c1);
  if (config_.share_adm_params) {
    dense("adm.shared.gc", c1, c1);
    dense("adm.shared.tc", c1, config_.num_actions);
  } else {
    for (Component c : kComponents) {
      dense(adm_prefix(c) + ".gc", c1, c1);
      dense(adm_prefix(c) + ".tc", c1, config_.num_actions);
    }
  }
  dense("rrm.gc", c1, c2);
  params_.add("rrm.gc.self", he_uniform(c1, c2, 2 * c1, rng));
  dense("rrm.tc", c2, c2);
  dense("head", c1, config_.num_classes);
}

std::string DereModel::adm_prefix(Component c) const {
  return config_.share_adm_params ? "adm.shared" : "adm." + to_string(c);
}

std::array<Tensor, 3> DereModel::stack_frames(std::span<const StGraph> batch) const {
  if (batch.empty()) throw ShapeError("forward: empty batch");
  const Index n = kNumGraphNodes;
  std::array<Tensor, 3> out;
  for (int f = 0; f < kNumKeyframes; ++f) {
    Matrix x(n * static_cast<Index>(batch.size()), 2);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& nf = batch[b].node_features[static_cast<std::size_t>(f)];
      if (nf.rows() != n || nf.cols() != 2)
        throw ShapeError("forward: node features must be (31, 2)");
      x.middleRows(static_cast<Index>(b) * n, n) = nf;
    }
    out[static_cast<std::size_t>(f)] = Tensor(std::move(x));
  }
  return out;
}

Tensor DereModel::backbone_forward(const std::array<Tensor, 3>& frames) const {
  std::vector<Tensor> x(frames.begin(), frames.end());
  for (int layer = 0; layer < 2; ++layer) {
    const std::string pre = "backbone." + std::to_string(layer);
    std::vector<Tensor> spatial;
    for (const auto& f : x)
      spatial.push_back(graph_conv(adjacency_, f, p(pre + ".gc.weight"), p(pre + ".gc.bias")));
    const std::array<Tensor, 3> taps = {p(pre + ".tc.weight.0"), p(pre + ".tc.weight.1"),
                                        p(pre + ".tc.weight.2")};
    x = temporal_conv(spatial, taps, p(pre + ".tc.bias"), /*same=*/layer == 0);
    for (auto& t : x) t = ad::relu(t);
  }
  return x.front();
}

AdmOutput DereModel::adm_forward(const Tensor& basic_features) const {
  const Index n = kNumGraphNodes;
  if (basic_features.rows() % n != 0 || basic_features.cols() != config_.feature_channels)
    throw ShapeError("adm_forward: expected (B*31, C_1), got " + basic_features.shape_str());
  const Index batch = basic_features.rows() / n;
  const Index na = config_.num_actions;

  AdmOutput out;
  std::vector<Tensor> groups;
  for (Component c : kComponents) {
    const auto& sg = subgraphs_[static_cast<std::size_t>(c)];
    const auto nf = static_cast<Index>(sg.nodes.size());
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(batch * nf));
    for (Index b = 0; b < batch; ++b)
      for (int node : sg.nodes) rows.push_back(b * n + node);
    const Tensor part = ad::gather_rows(basic_features, rows);
    const std::string pre = adm_prefix(c);
    const Tensor hidden = graph_conv(sg.adjacency, part, p(pre + ".gc.weight"), p(pre + ".gc.bias"));
    const Tensor raw = ad::add_row(ad::matmul(hidden, p(pre + ".tc.weight")), p(pre + ".tc.bias"));
    const Tensor map = ad::softmax_rows(raw);
    groups.push_back(ad::block_transpose_matmul(map, part, nf));
    out.raw_maps[static_cast<std::size_t>(c)] = raw;
    out.maps[static_cast<std::size_t>(c)] = map;
  }
  // groups are component-major; reorder to sample-major [e; n; m] blocks.
  const Tensor stacked = ad::concat_rows(groups);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(3 * batch * na));
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < 3; ++c)
      for (Index j = 0; j < na; ++j) order.push_back(c * batch * na + b * na + j);
  out.action_features = ad::gather_rows(stacked, order);
  return out;
}

RrmOutput DereModel::rrm_forward(const Tensor& action_features) const {
  const Index m = config_.total_actions();
  if (action_features.rows() % m != 0 || action_features.cols() != config_.feature_channels)
    throw ShapeError("rrm_forward: expected (B*3N_a, C_1), got " + action_features.shape_str());
  RrmOutput out;
  // the uniform relation graph gives every node the same aggregate, so
  // each node also keeps its own term
  const Tensor hidden = ad::relu(ad::add_row(
      ad::add(ad::matmul(ad::propagate(relation_adjacency_, action_features), p("rrm.gc.weight")),
              ad::matmul(action_features, p("rrm.gc.self"))),
      p("rrm.gc.bias")));
  out.relation_features = ad::add_row(ad::matmul(hidden, p("rrm.tc.weight")), p("rrm.tc.bias"));
  Tensor w = ad::l1_rowsum(out.relation_features);
  if (config_.normalize_weights) {
    w = ad::normalize_blocks(w, m, &out.zero_weight_blocks);
    if (out.zero_weight_blocks > 0)
      warn("rrm: " + std::to_string(out.zero_weight_blocks) +
           " sample(s) with all-zero relation features; using uniform weights");
  }
  out.weights = w;
  out.me_features = ad::block_transpose_matmul(w, action_features, m);
  return out;
}

Tensor DereModel::classify(const Tensor& features) const {
  if (features.cols() != config_.feature_channels)
    throw ShapeError("classify: expected C_1 columns, got " + features.shape_str());
  return ad::add_row(ad::matmul(features, p("head.weight")), p("head.bias"));
}

ForwardResult DereModel::forward(std::span<const StGraph> batch) const {
  return forward(batch, config_.variant);
}

ForwardResult DereModel::forward(std::span<const StGraph> batch, Variant variant) const {
  ForwardResult r;
  r.batch = static_cast<Index>(batch.size());
  r.basic_features = backbone_forward(stack_frames(batch));
  if (variant == Variant::backbone_only) {
    r.pooled = ad::mean_over_batch(r.basic_features, kNumGraphNodes);
  } else {
    r.adm = adm_forward(r.basic_features);
    if (variant == Variant::backbone_adm) {
      r.pooled = ad::mean_over_batch(r.adm.action_features, config_.total_actions());
    } else {
      r.rrm = rrm_forward(r.adm.action_features);
      r.pooled = r.rrm.me_features;
    }
  }
  r.logits = classify(r.pooled);
  return r;
}

std::map<std::string, Index> DereModel::parameter_counts() const {
  std::map<std::string, Index> out;
  for (const auto& [name, t] : params_) out[name.substr(0, name.find('.'))] += t.size();
  return out;
}

}  // namespace dere
