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

#include "dere/landmark_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "dere/error.hpp"

namespace dere {

using nlohmann::json;

std::vector<std::string> DatasetManifest::subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : samples)
    if (seen.insert(s.subject).second) out.push_back(s.subject);
  return out;
}

json sample_to_json(const LandmarkSample& sample) {
  json frames = json::array();
  for (const auto& f : sample.frames) {
    json pts = json::array();
    for (int i = 0; i < kNumLandmarks; ++i) pts.push_back({f(i, 0), f(i, 1)});
    frames.push_back(std::move(pts));
  }
  return {{"subject", sample.subject}, {"label", sample.label}, {"frames", std::move(frames)}};
}

LandmarkSample sample_from_json(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ParseError(where + ": expected a JSON object");
  LandmarkSample s;
  if (!doc.contains("subject") || !doc["subject"].is_string())
    throw ParseError(where + ": missing string field \"subject\"");
  s.subject = doc["subject"].get<std::string>();
  const std::string name = where + " (subject " + s.subject + ")";
  if (!doc.contains("label") || !doc["label"].is_number_integer())
    throw ParseError(name + ": missing integer field \"label\"");
  s.label = doc["label"].get<int>();
  if (s.label < 0) throw ValidationError(name + ": negative label");
  if (!doc.contains("frames") || !doc["frames"].is_array())
    throw ParseError(name + ": missing array field \"frames\"");
  const auto& frames = doc["frames"];
  if (frames.size() != kNumKeyframes)
    throw ValidationError(name + ": expected 3 frames, got " + std::to_string(frames.size()));
  for (int f = 0; f < kNumKeyframes; ++f) {
    const auto& pts = frames[static_cast<std::size_t>(f)];
    if (!pts.is_array() || pts.size() != kNumLandmarks)
      throw ValidationError(name + ": frame " + std::to_string(f) + " has " +
                            std::to_string(pts.is_array() ? pts.size() : 0) +
                            " points, expected 68");
    for (int i = 0; i < kNumLandmarks; ++i) {
      const auto& p = pts[static_cast<std::size_t>(i)];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw ValidationError(name + ": frame " + std::to_string(f) + " point " +
                              std::to_string(i) + " is not an [x, y] pair");
      s.frames[static_cast<std::size_t>(f)](i, 0) = p[0].get<double>();
      s.frames[static_cast<std::size_t>(f)](i, 1) = p[1].get<double>();
    }
    if (!s.frames[static_cast<std::size_t>(f)].allFinite())
      throw ValidationError(name + ": frame " + std::to_string(f) + " has non-finite coordinates");
  }
  return s;
}

DatasetManifest load_manifest(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  DatasetManifest m;
  m.source = DataSource::ingested;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    m.samples.push_back(sample_from_json(doc, where));
  }
  if (m.samples.empty()) throw ValidationError("empty dataset: " + path.string());

  int max_label = 0;
  for (const auto& s : m.samples) max_label = std::max(max_label, s.label);
  const int k = num_classes > 0 ? num_classes : max_label + 1;
  if (max_label >= k)
    throw ValidationError("label " + std::to_string(max_label) + " outside [0, " +
                          std::to_string(k) + ")");
  for (int c = 0; c < k; ++c) m.class_names.push_back("class" + std::to_string(c));
  for (const auto& w : loso_coverage_warnings(m)) warn(w);
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path.string());
  for (const auto& s : manifest.samples) out << sample_to_json(s).dump() << '\n';
}

std::vector<std::string> loso_coverage_warnings(const DatasetManifest& manifest) {
  std::map<int, std::set<std::string>> subjects_per_class;
  for (const auto& s : manifest.samples) subjects_per_class[s.label].insert(s.subject);
  std::vector<std::string> out;
  for (int c = 0; c < manifest.num_classes(); ++c) {
    const auto n = subjects_per_class[c].size();
    if (n < 2)
      out.push_back("class " + std::to_string(c) + " has samples from " + std::to_string(n) +
                    " subject(s); LOSO on it is degenerate");
  }
  return out;
}

LandmarkSample magnify(const LandmarkSample& sample, double alpha) {
  if (!(alpha > 0) || !std::isfinite(alpha))
    throw ConfigError("magnify: alpha must be positive, got " + std::to_string(alpha));
  LandmarkSample out = sample;
  const auto& onset = sample.frame(Keyframe::onset);
  for (int f = 1; f < kNumKeyframes; ++f) {
    out.frames[f] = onset + alpha * (sample.frames[f] - onset);
    if (!out.frames[f].allFinite())
      throw ValidationError("magnify: non-finite result for subject " + sample.subject);
  }
  return out;
}

LandmarkSample apply_similarity(const LandmarkSample& sample, const SimilarityTransform& t) {
  LandmarkSample out = sample;
  const Eigen::RowVector2d shift(t.tx, t.ty);
  for (auto& f : out.frames) {
    f = (t.scale * f).rowwise() + shift;
    if (!f.allFinite())
      throw ValidationError("crop jitter: non-finite result for subject " + sample.subject);
  }
  return out;
}

SimilarityTransform draw_jitter(const JitterConfig& config, std::uint64_t seed) {
  if (!(config.min_scale > 0) || config.max_scale < config.min_scale || config.max_shift < 0)
    throw ConfigError("crop jitter: invalid scale/shift range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SimilarityTransform t;
  t.scale = config.min_scale + (config.max_scale - config.min_scale) * unit(rng);
  t.tx = config.max_shift * (2.0 * unit(rng) - 1.0);
  t.ty = config.max_shift * (2.0 * unit(rng) - 1.0);
  return t;
}

LandmarkSample augment_crop_jitter(const LandmarkSample& sample, const JitterConfig& config,
                                   std::uint64_t seed) {
  return apply_similarity(sample, draw_jitter(config, seed));
}

LandmarkFrame canonical_face() {
  using std::numbers::pi;
  LandmarkFrame f;
  for (int i = 0; i <= 16; ++i) {  // jaw
    const double t = pi * i / 16.0;
    f.row(i) << -80.0 * std::cos(t), 10.0 + 90.0 * std::sin(t);
  }
  for (int j = 0; j < 5; ++j) {  // eyebrows
    const double arch = 8.0 * std::sin(pi * j / 4.0);
    f.row(17 + j) << -70.0 + 13.75 * j, -55.0 - arch;
    f.row(22 + j) << 15.0 + 13.75 * j, -55.0 - arch;
  }
  for (int j = 0; j < 4; ++j) f.row(27 + j) << 0.0, -35.0 + 15.0 * j;  // nose bridge
  const double nose_x[5] = {-18, -9, 0, 9, 18};
  const double nose_y[5] = {22, 25, 27, 25, 22};
  for (int j = 0; j < 5; ++j) f.row(31 + j) << nose_x[j], nose_y[j];
  auto eye = [&f](int first, double cx, double cy) {
    const double rx = 15.0, ry = 6.0;
    f.row(first + 0) << cx - rx, cy;
    f.row(first + 1) << cx - rx / 2, cy - ry;
    f.row(first + 2) << cx + rx / 2, cy - ry;
    f.row(first + 3) << cx + rx, cy;
    f.row(first + 4) << cx + rx / 2, cy + ry;
    f.row(first + 5) << cx - rx / 2, cy + ry;
  };
  eye(36, -40.0, -30.0);
  eye(42, 40.0, -30.0);
  for (int k = 0; k < 12; ++k) {  // outer lip, starting at the left corner
    const double a = pi + pi * k / 6.0;
    f.row(48 + k) << 32.0 * std::cos(a), 55.0 + 12.0 * std::sin(a);
  }
  for (int k = 0; k < 8; ++k) {  // inner lip
    const double a = pi + pi * k / 4.0;
    f.row(60 + k) << 20.0 * std::cos(a), 55.0 + 5.0 * std::sin(a);
  }
  return f.rowwise() + Eigen::RowVector2d(200.0, 200.0);
}

ClassMotionSpec ClassMotionSpec::builtin(int k) {
  using V = Eigen::Vector2d;
  std::vector<MotionPattern> lib;
  {
    MotionPattern p{"brow_raise", {}};
    for (int i = 17; i <= 26; ++i) p.displacements.push_back({i, V(0.0, -2.0)});
    lib.push_back(p);
  }
  lib.push_back({"lip_corner_pull",
                 {{48, V(-1.5, -1.2)}, {54, V(1.5, -1.2)}, {49, V(-0.6, -0.5)},
                  {59, V(-0.6, -0.5)}, {53, V(0.6, -0.5)}, {55, V(0.6, -0.5)}}});
  {
    MotionPattern p{"nose_wrinkle", {}};
    for (int i = 27; i <= 30; ++i) p.displacements.push_back({i, V(0.0, -0.4 * (i - 26))});
    for (int i = 31; i <= 35; ++i) p.displacements.push_back({i, V(0.5 * (i - 33), -1.5)});
    lib.push_back(p);
  }
  lib.push_back({"mouth_open",
                 {{55, V(0.0, 1.2)}, {56, V(0.0, 2.0)}, {57, V(0.0, 2.5)}, {58, V(0.0, 2.0)},
                  {59, V(0.0, 1.2)}}});
  lib.push_back({"brow_lower",
                 {{17, V(0.0, 0.6)}, {18, V(0.0, 0.6)}, {19, V(0.8, 1.6)}, {20, V(0.8, 1.6)},
                  {21, V(0.8, 1.6)}, {22, V(-0.8, 1.6)}, {23, V(-0.8, 1.6)}, {24, V(-0.8, 1.6)},
                  {25, V(0.0, 0.6)}, {26, V(0.0, 0.6)}}});
  lib.push_back({"lip_corner_depress",
                 {{48, V(-0.4, 1.6)}, {54, V(0.4, 1.6)}, {59, V(0.0, 0.8)}, {55, V(0.0, 0.8)}}});
  {
    MotionPattern p{"upper_lip_raise", {}};
    for (int i = 49; i <= 53; ++i) p.displacements.push_back({i, V(0.0, -1.6)});
    lib.push_back(p);
  }
  lib.push_back({"lip_pucker",
                 {{48, V(1.8, 0.0)}, {54, V(-1.8, 0.0)}, {49, V(1.0, 0.3)}, {53, V(-1.0, 0.3)},
                  {59, V(1.0, -0.3)}, {55, V(-1.0, -0.3)}}});
  if (k < 2 || k > static_cast<int>(lib.size()))
    throw ConfigError("synthetic spec: class count must be in [2, " + std::to_string(lib.size()) +
                      "], got " + std::to_string(k));
  ClassMotionSpec spec;
  spec.classes.assign(lib.begin(), lib.begin() + k);
  return spec;
}

DatasetManifest synthesize_dataset(const ClassMotionSpec& spec, int n_subjects,
                                   int samples_per_subject, double noise_sigma,
                                   std::uint64_t seed) {
  const int k = static_cast<int>(spec.classes.size());
  if (k < 2) throw ConfigError("synthesize_dataset: need at least 2 classes");
  if (n_subjects < 2) throw ConfigError("synthesize_dataset: need at least 2 subjects");
  if (samples_per_subject < 1) throw ConfigError("synthesize_dataset: samples_per_subject < 1");
  if (!(noise_sigma >= 0)) throw ConfigError("synthesize_dataset: noise_sigma must be >= 0");

  DatasetManifest m;
  m.source = DataSource::synthetic;
  for (const auto& c : spec.classes) m.class_names.push_back(c.name);

  const LandmarkFrame base = canonical_face();
  const Eigen::RowVector2d centre = base.colwise().mean();
  const int width = n_subjects < 100 ? 2 : 3;

  for (int subj = 0; subj < n_subjects; ++subj) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(subj)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Identity: face scale, position, static shape offsets, expressivity.
    const double face_scale = 0.9 + 0.2 * unit(rng);
    const Eigen::RowVector2d shift(50.0 * unit(rng) - 25.0, 50.0 * unit(rng) - 25.0);
    const double expressivity = 0.75 + 0.5 * unit(rng);
    LandmarkFrame neutral = base;
    for (int i = 0; i < kNumLandmarks; ++i)
      for (int d = 0; d < 2; ++d) neutral(i, d) += 1.5 * gauss(rng);
    neutral = ((neutral.rowwise() - centre) * face_scale).rowwise() + (centre + shift);

    std::ostringstream id;
    id << 's' << std::setw(width) << std::setfill('0') << (subj + 1);

    for (int c = 0; c < k; ++c) {
      LandmarkFrame motion = LandmarkFrame::Zero();
      for (const auto& [idx, d] : spec.classes[static_cast<std::size_t>(c)].displacements)
        motion.row(idx) += (face_scale * expressivity) * d.transpose();
      for (int r = 0; r < samples_per_subject; ++r) {
        LandmarkSample s;
        s.subject = id.str();
        s.label = c;
        s.frames[0] = neutral;
        s.frames[1] = neutral + motion;
        s.frames[2] = neutral + spec.offset_fraction * motion;
        if (noise_sigma > 0)
          for (int f = 1; f < kNumKeyframes; ++f)
            for (int i = 0; i < kNumLandmarks; ++i)
              for (int d = 0; d < 2; ++d) s.frames[f](i, d) += noise_sigma * gauss(rng);
        m.samples.push_back(std::move(s));
      }
    }
  }
  return m;
}

}  // namespace dere
