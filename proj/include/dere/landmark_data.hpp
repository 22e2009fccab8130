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

#ifndef DERE_LANDMARK_DATA_HPP_
#define DERE_LANDMARK_DATA_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace dere {

inline constexpr int kNumLandmarks = 68;
inline constexpr int kNumKeyframes = 3;

/// 68 (x, y) points in the standard 68-point facial annotation layout.
using LandmarkFrame = Eigen::Matrix<double, kNumLandmarks, 2, Eigen::RowMajor>;

enum class Keyframe : int { onset = 0, apex = 1, offset = 2 };

/// One micro-expression instance: onset, apex and offset landmarks.
struct LandmarkSample {
  std::string subject;
  int label = 0;
  std::array<LandmarkFrame, kNumKeyframes> frames;

  const LandmarkFrame& frame(Keyframe k) const { return frames[static_cast<int>(k)]; }
  bool operator==(const LandmarkSample&) const = default;
};

enum class DataSource { ingested, synthetic };

struct DatasetManifest {
  std::vector<LandmarkSample> samples;
  std::vector<std::string> class_names;
  DataSource source = DataSource::ingested;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  /// Distinct subject ids in order of first appearance.
  std::vector<std::string> subjects() const;
};

// ---------------------------------------------------------------------------
// On-disk format: JSON lines, one sample per line,
//   {"subject": "s01", "label": 2, "frames": [[[x, y] x 68] x 3]}

nlohmann::json sample_to_json(const LandmarkSample& sample);
/// `where` prefixes error messages (e.g. "line 4").
LandmarkSample sample_from_json(const nlohmann::json& doc, const std::string& where);

/// Reads a JSON-lines dataset. `num_classes` = 0 infers K from the largest
/// label. Blank lines are skipped; an empty file is an error.
DatasetManifest load_manifest(const std::filesystem::path& path, int num_classes = 0);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Classes whose samples come from fewer than two subjects.
std::vector<std::string> loso_coverage_warnings(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Geometric transforms

/// Scales every apex/offset displacement about the onset frame by `alpha`.
LandmarkSample magnify(const LandmarkSample& sample, double alpha);

/// Uniform scale about the origin followed by a translation.
struct SimilarityTransform {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

struct JitterConfig {
  double min_scale = 0.95;
  double max_scale = 1.05;
  double max_shift = 3.0;  // pixels, per axis
};

LandmarkSample apply_similarity(const LandmarkSample& sample, const SimilarityTransform& t);
SimilarityTransform draw_jitter(const JitterConfig& config, std::uint64_t seed);
/// Applies one seeded similarity transform to all three frames.
LandmarkSample augment_crop_jitter(const LandmarkSample& sample, const JitterConfig& config,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic data

/// Apex displacement (pixels, at unit face scale) for a set of landmarks.
struct MotionPattern {
  std::string name;
  std::vector<std::pair<int, Eigen::Vector2d>> displacements;
};

struct ClassMotionSpec {
  std::vector<MotionPattern> classes;
  /// Offset displacement as a fraction of the apex displacement.
  double offset_fraction = 0.3;

  /// The first `k` patterns of the built-in library (2 <= k <= 8).
  static ClassMotionSpec builtin(int k = 5);
};

/// Neutral 68-point face, roughly 160 px wide, centred at (200, 200).
LandmarkFrame canonical_face();

/// n_subjects x samples_per_subject x K samples ordered subject-major, then
/// class, then repetition. Deterministic in `seed`.
DatasetManifest synthesize_dataset(const ClassMotionSpec& spec, int n_subjects,
                                   int samples_per_subject, double noise_sigma,
                                   std::uint64_t seed);

}  // namespace dere

#endif  // DERE_LANDMARK_DATA_HPP_
