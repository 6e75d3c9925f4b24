// Copyright 2026 The BridgeTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BRIDGETA_SCENEGEN_HPP_
#define BRIDGETA_SCENEGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bridgeta/tensor.hpp"

namespace bridgeta {

// Synthetic multimodal benchmark. A geometric ("lidar-like") channel keeps
// crisp scene structure; the appearance ("camera-like") channels carry class
// identity but are degraded by noise, darkness and occlusion. A model fusing
// both therefore has strictly more usable signal than a camera-only one.

/// Class layers, in label-channel order. Layers may overlap (multi-label).
enum SceneClass : int {
  kDrivable = 0,
  kDivider = 1,
  kWalkway = 2,
  kStopline = 3,
};

struct GenConfig {
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t n_classes = 4;
  std::int64_t camera_channels = 3;
  std::int64_t lidar_channels = 1;
  std::int64_t train_scenes = 200;
  std::int64_t val_scenes = 50;
  double camera_noise_sigma = 0.03;
  double night_probability = 0.4;
  double night_brightness_scale = 0.45;
  int occlusion_patch_count = 2;
  int occlusion_patch_size = 7;
  double lidar_dropout_rate = 0.03;
  std::uint64_t seed = 1;

  void validate() const;  // throws InvalidArgument on out-of-range fields
};

struct Scene {
  std::uint64_t id = 0;
  bool night = false;
  Tensor lidar;   // 1 x H x W, values in [0, 1]
  Tensor camera;  // 3 x H x W, values in [0, 1]
  Tensor labels;  // N_c x H x W, values in {0, 1}
};

/// Deterministic function of (config, scene_seed). Grids are quantized
/// through f32 so an in-memory scene matches its on-disk round trip bit for
/// bit.
Scene generate_scene(const GenConfig& config, std::uint64_t scene_seed);

struct DatasetSummary {
  std::int64_t train_count = 0;
  std::int64_t val_count = 0;
  std::vector<double> class_positive_rates;  // train split
  std::string train_sha256;
  std::string val_sha256;
};

/// Writes train.bin / val.bin (format "BTA1") plus manifest.json into
/// out_dir.
DatasetSummary generate_dataset(const GenConfig& config,
                                const std::filesystem::path& out_dir);

/// Reads a JSON config; absent fields keep their defaults.
GenConfig load_gen_config(const std::filesystem::path& json_path);

/// Loaded dataset with integrity-checked splits.
class Dataset {
 public:
  /// Reads manifest.json and both splits; file hashes must match the
  /// manifest (CorruptionError) and both split files must exist
  /// (FormatError).
  static Dataset load(const std::filesystem::path& dir);

  const GenConfig& config() const { return config_; }
  const std::vector<Scene>& split(std::string_view name) const;

  /// Batches of `batch_size` scenes in a seeded, epoch-deterministic
  /// shuffle order; the last batch carries the remainder.
  std::vector<std::vector<const Scene*>> batches(std::string_view split,
                                                 std::int64_t batch_size,
                                                 std::uint64_t seed,
                                                 std::int64_t epoch) const;

  std::string manifest_sha256() const { return manifest_sha256_; }

 private:
  GenConfig config_;
  std::vector<Scene> train_;
  std::vector<Scene> val_;
  std::string manifest_sha256_;
};

}  // namespace bridgeta

#endif  // BRIDGETA_SCENEGEN_HPP_
