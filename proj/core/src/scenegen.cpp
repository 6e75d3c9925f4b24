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

#include "bridgeta/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "bridgeta/errors.hpp"
#include "bridgeta/rng.hpp"
#include "bridgeta/sha256.hpp"
#include "wire.hpp"

namespace bridgeta {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'B', 'T', 'A', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kValSeedOffset = 1'000'000'000ULL;
constexpr double kOcclusionGray = 0.5;

struct Corridor {
  double cx, cy;       // center, grid units
  double cos_t, sin_t; // axis direction
  double half_width;
  double half_length;
  std::vector<double> stop_positions;  // along-axis offsets
};

// Class base colors (day). Background is everything else; strong channel
// contrast keeps the daytime task learnable at the small training budget.
constexpr double kColors[5][3] = {
    {0.55, 0.55, 0.60},  // drivable: asphalt gray
    {0.98, 0.98, 0.92},  // divider: painted line
    {0.85, 0.35, 0.15},  // walkway: brick
    {0.95, 0.85, 0.10},  // stopline: painted yellow
    {0.05, 0.10, 0.05},  // background
};

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

void quantize_all(std::span<double> values) {
  for (double& v : values) v = quantize(v);
}

}  // namespace

void GenConfig::validate() const {
  if (height < 16 || width < 16)
    throw InvalidArgument("gen config: grid must be at least 16x16");
  if (n_classes < 2 || n_classes > 4)
    throw InvalidArgument("gen config: n_classes must be in [2, 4]");
  if (camera_channels != 3)
    throw InvalidArgument("gen config: camera_channels must be 3");
  if (lidar_channels != 1)
    throw InvalidArgument("gen config: lidar_channels must be 1");
  if (train_scenes < 1 || val_scenes < 1)
    throw InvalidArgument("gen config: scene counts must be positive");
  if (camera_noise_sigma < 0.0)
    throw InvalidArgument("gen config: camera_noise_sigma must be >= 0");
  if (night_probability < 0.0 || night_probability > 1.0)
    throw InvalidArgument("gen config: night_probability must be in [0, 1]");
  if (night_brightness_scale < 0.0 || night_brightness_scale > 1.0)
    throw InvalidArgument("gen config: night_brightness_scale in [0, 1]");
  if (lidar_dropout_rate < 0.0 || lidar_dropout_rate > 1.0)
    throw InvalidArgument("gen config: lidar_dropout_rate must be in [0, 1]");
  if (occlusion_patch_count < 0 || occlusion_patch_size < 0)
    throw InvalidArgument("gen config: occlusion fields must be >= 0");
}

Scene generate_scene(const GenConfig& config, std::uint64_t scene_seed) {
  config.validate();
  const std::int64_t h = config.height, w = config.width;
  const std::int64_t cells = h * w;
  Rng rng(derive_seed(config.seed, scene_seed));

  // --- geometry: 1-3 road corridors ---
  const int n_corridors = 1 + static_cast<int>(rng.uniform_index(3));
  const double diag = std::sqrt(static_cast<double>(h * h + w * w));
  std::vector<Corridor> corridors;
  for (int i = 0; i < n_corridors; ++i) {
    Corridor c;
    c.cx = rng.uniform(0.2, 0.8) * static_cast<double>(w);
    c.cy = rng.uniform(0.2, 0.8) * static_cast<double>(h);
    const double theta = rng.uniform(0.0, M_PI);
    c.cos_t = std::cos(theta);
    c.sin_t = std::sin(theta);
    c.half_width = 0.5 * rng.uniform(5.0, 9.0);
    c.half_length = 0.5 * rng.uniform(0.8, 1.6) * diag;
    const int n_stops = 1 + static_cast<int>(rng.uniform_index(2));
    for (int s = 0; s < n_stops; ++s)
      c.stop_positions.push_back(rng.uniform(-0.4, 0.4) * 2.0 * c.half_length);
    corridors.push_back(c);
  }

  // --- label masks (multi-label; divider/stopline sit inside drivable) ---
  std::vector<double> masks(static_cast<std::size_t>(4 * cells), 0.0);
  auto mask = [&](int cls) { return masks.data() + cls * cells; };
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const std::int64_t at = y * w + x;
      for (const Corridor& c : corridors) {
        const double dx = px - c.cx, dy = py - c.cy;
        const double along = dx * c.cos_t + dy * c.sin_t;
        const double perp = -dx * c.sin_t + dy * c.cos_t;
        if (std::fabs(along) > c.half_length) continue;
        const double ap = std::fabs(perp);
        if (ap <= c.half_width) mask(kDrivable)[at] = 1.0;
        if (ap <= 0.8) mask(kDivider)[at] = 1.0;
        if (ap > c.half_width && ap <= c.half_width + 2.5)
          mask(kWalkway)[at] = 1.0;
        for (double stop : c.stop_positions) {
          if (std::fabs(along - stop) <= 1.3 && ap <= c.half_width)
            mask(kStopline)[at] = 1.0;
        }
      }
    }
  }

  // --- camera: base colors by paint priority, blur, degradations ---
  std::vector<double> camera(static_cast<std::size_t>(3 * cells));
  for (std::int64_t at = 0; at < cells; ++at) {
    int cls = 4;  // background
    if (mask(kDrivable)[at] > 0.0) cls = kDrivable;
    if (mask(kWalkway)[at] > 0.0) cls = kWalkway;
    if (mask(kStopline)[at] > 0.0) cls = kStopline;
    if (mask(kDivider)[at] > 0.0) cls = kDivider;
    for (int ch = 0; ch < 3; ++ch)
      camera[static_cast<std::size_t>(ch * cells + at)] = kColors[cls][ch];
  }

  // one 3x3 binomial blur pass, clamp-to-edge sampling
  {
    static const double kKernel[3] = {1.0, 2.0, 1.0};
    std::vector<double> blurred(camera.size());
    for (int ch = 0; ch < 3; ++ch) {
      const double* src = camera.data() + ch * cells;
      double* dst = blurred.data() + ch * cells;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int ky = -1; ky <= 1; ++ky) {
            const std::int64_t sy = std::clamp<std::int64_t>(y + ky, 0, h - 1);
            for (int kx = -1; kx <= 1; ++kx) {
              const std::int64_t sx =
                  std::clamp<std::int64_t>(x + kx, 0, w - 1);
              acc += kKernel[ky + 1] * kKernel[kx + 1] * src[sy * w + sx];
            }
          }
          dst[y * w + x] = acc / 16.0;
        }
      }
    }
    camera.swap(blurred);
  }

  const bool night = rng.bernoulli(config.night_probability);
  if (night)
    for (double& v : camera) v *= config.night_brightness_scale;
  const double sigma = config.camera_noise_sigma * (night ? 2.0 : 1.0);
  if (sigma > 0.0)
    for (double& v : camera) v += rng.normal(0.0, sigma);
  else
    for (std::int64_t i = 0; i < 3 * cells; ++i) rng.normal();  // keep stream

  for (int p = 0; p < config.occlusion_patch_count; ++p) {
    const std::int64_t top = static_cast<std::int64_t>(rng.uniform_index(
        static_cast<std::uint64_t>(h)));
    const std::int64_t left = static_cast<std::int64_t>(rng.uniform_index(
        static_cast<std::uint64_t>(w)));
    const std::int64_t bottom =
        std::min<std::int64_t>(h, top + config.occlusion_patch_size);
    const std::int64_t right =
        std::min<std::int64_t>(w, left + config.occlusion_patch_size);
    for (int ch = 0; ch < 3; ++ch)
      for (std::int64_t y = top; y < bottom; ++y)
        for (std::int64_t x = left; x < right; ++x)
          camera[static_cast<std::size_t>(ch * cells + y * w + x)] =
              kOcclusionGray;
  }

  for (double& v : camera) v = std::clamp(v, 0.0, 1.0);

  // --- lidar: crisp union geometry, seeded dropout ---
  std::vector<double> lidar(static_cast<std::size_t>(cells), 0.0);
  for (std::int64_t at = 0; at < cells; ++at) {
    for (int cls = 0; cls < 4; ++cls)
      if (mask(cls)[at] > 0.0) lidar[static_cast<std::size_t>(at)] = 1.0;
  }
  for (std::int64_t at = 0; at < cells; ++at) {
    const bool drop = rng.bernoulli(config.lidar_dropout_rate);
    if (drop) lidar[static_cast<std::size_t>(at)] = 0.0;
  }

  std::vector<double> labels(
      static_cast<std::size_t>(config.n_classes * cells));
  std::copy(masks.begin(), masks.begin() + config.n_classes * cells,
            labels.begin());

  quantize_all(lidar);
  quantize_all(camera);

  Scene scene;
  scene.id = scene_seed;
  scene.night = night;
  scene.lidar = Tensor::from_data({1, h, w}, std::move(lidar));
  scene.camera = Tensor::from_data({3, h, w}, std::move(camera));
  scene.labels =
      Tensor::from_data({config.n_classes, h, w}, std::move(labels));
  return scene;
}

// ---------------------------------------------------------------------------
// Binary split files + manifest
// ---------------------------------------------------------------------------

namespace {

std::string encode_split(const GenConfig& config,
                         const std::vector<Scene>& scenes) {
  std::string out;
  out.append(kMagic, 4);
  wire::put_u32(out, kVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(scenes.size()));
  wire::put_u16(out, static_cast<std::uint16_t>(config.height));
  wire::put_u16(out, static_cast<std::uint16_t>(config.width));
  wire::put_u16(out, static_cast<std::uint16_t>(config.n_classes));
  for (const Scene& s : scenes) {
    wire::put_u64(out, s.id);
    wire::put_u8(out, s.night ? 1 : 0);
    for (double v : s.lidar.data()) wire::put_f32(out, static_cast<float>(v));
    for (double v : s.camera.data()) wire::put_f32(out, static_cast<float>(v));
    for (double v : s.labels.data())
      wire::put_u8(out, v != 0.0 ? 1 : 0);
  }
  return out;
}

std::vector<Scene> decode_split(const std::string& bytes,
                                const GenConfig& config,
                                const std::string& context) {
  wire::Reader r(bytes, context);
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError(context + ": bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError(context + ": unsupported version " +
                      std::to_string(version));
  const std::uint32_t count = r.u32("scene count");
  const std::int64_t h = r.u16("height");
  const std::int64_t w = r.u16("width");
  const std::int64_t n_classes = r.u16("class count");
  if (h != config.height || w != config.width || n_classes != config.n_classes)
    throw FormatError(context + ": header does not match manifest config");
  const std::int64_t cells = h * w;
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string tag = "scene " + std::to_string(i);
    Scene s;
    s.id = r.u64(tag + " id");
    s.night = r.u8(tag + " night flag") != 0;
    std::vector<double> lidar(static_cast<std::size_t>(cells));
    for (auto& v : lidar) v = static_cast<double>(r.f32(tag + " lidar"));
    std::vector<double> camera(static_cast<std::size_t>(3 * cells));
    for (auto& v : camera) v = static_cast<double>(r.f32(tag + " camera"));
    std::vector<double> labels(static_cast<std::size_t>(n_classes * cells));
    for (auto& v : labels) {
      const std::uint8_t bit = r.u8(tag + " labels");
      if (bit > 1) throw FormatError(context + ": non-binary label byte");
      v = static_cast<double>(bit);
    }
    s.lidar = Tensor::from_data({1, h, w}, std::move(lidar));
    s.camera = Tensor::from_data({3, h, w}, std::move(camera));
    s.labels = Tensor::from_data({n_classes, h, w}, std::move(labels));
    scenes.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError(context + ": trailing bytes");
  return scenes;
}

json config_to_json(const GenConfig& c) {
  json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["n_classes"] = c.n_classes;
  j["camera_channels"] = c.camera_channels;
  j["lidar_channels"] = c.lidar_channels;
  j["train_scenes"] = c.train_scenes;
  j["val_scenes"] = c.val_scenes;
  j["camera_noise_sigma"] = c.camera_noise_sigma;
  j["night_probability"] = c.night_probability;
  j["night_brightness_scale"] = c.night_brightness_scale;
  j["occlusion_patch_count"] = c.occlusion_patch_count;
  j["occlusion_patch_size"] = c.occlusion_patch_size;
  j["lidar_dropout_rate"] = c.lidar_dropout_rate;
  j["seed"] = c.seed;
  return j;
}

GenConfig config_from_json(const json& j) {
  GenConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.camera_channels = j.value("camera_channels", c.camera_channels);
  c.lidar_channels = j.value("lidar_channels", c.lidar_channels);
  c.camera_noise_sigma = j.value("camera_noise_sigma", c.camera_noise_sigma);
  c.train_scenes = j.value("train_scenes", c.train_scenes);
  c.val_scenes = j.value("val_scenes", c.val_scenes);
  c.night_probability = j.value("night_probability", c.night_probability);
  c.night_brightness_scale =
      j.value("night_brightness_scale", c.night_brightness_scale);
  c.occlusion_patch_count =
      j.value("occlusion_patch_count", c.occlusion_patch_count);
  c.occlusion_patch_size =
      j.value("occlusion_patch_size", c.occlusion_patch_size);
  c.lidar_dropout_rate = j.value("lidar_dropout_rate", c.lidar_dropout_rate);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

GenConfig load_gen_config(const std::filesystem::path& json_path) {
  const std::string bytes = wire::read_file(json_path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const std::exception& e) {
    throw FormatError("gen config " + json_path.string() + ": " + e.what());
  }
  GenConfig config = config_from_json(j);
  config.validate();
  return config;
}

DatasetSummary generate_dataset(const GenConfig& config,
                                const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<Scene> train, val;
  train.reserve(static_cast<std::size_t>(config.train_scenes));
  val.reserve(static_cast<std::size_t>(config.val_scenes));
  for (std::int64_t i = 0; i < config.train_scenes; ++i)
    train.push_back(generate_scene(config, static_cast<std::uint64_t>(i)));
  for (std::int64_t i = 0; i < config.val_scenes; ++i)
    val.push_back(
        generate_scene(config, kValSeedOffset + static_cast<std::uint64_t>(i)));

  const std::string train_bytes = encode_split(config, train);
  const std::string val_bytes = encode_split(config, val);
  wire::write_file(out_dir / "train.bin", train_bytes);
  wire::write_file(out_dir / "val.bin", val_bytes);

  DatasetSummary summary;
  summary.train_count = config.train_scenes;
  summary.val_count = config.val_scenes;
  summary.train_sha256 = sha256_hex(train_bytes);
  summary.val_sha256 = sha256_hex(val_bytes);
  summary.class_positive_rates.assign(
      static_cast<std::size_t>(config.n_classes), 0.0);
  const double cells_total = static_cast<double>(
      config.height * config.width * config.train_scenes);
  for (const Scene& s : train) {
    const double* labels = s.labels.data().data();
    const std::int64_t cells = config.height * config.width;
    for (std::int64_t cls = 0; cls < config.n_classes; ++cls) {
      double acc = 0.0;
      for (std::int64_t at = 0; at < cells; ++at) acc += labels[cls * cells + at];
      summary.class_positive_rates[static_cast<std::size_t>(cls)] +=
          acc / cells_total;
    }
  }

  json manifest;
  manifest["format"] = "BTA1";
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(config);
  manifest["splits"] = {
      {"train",
       {{"file", "train.bin"},
        {"count", summary.train_count},
        {"sha256", summary.train_sha256}}},
      {"val",
       {{"file", "val.bin"},
        {"count", summary.val_count},
        {"sha256", summary.val_sha256}}},
  };
  manifest["class_positive_rates"] = summary.class_positive_rates;
  wire::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw FormatError("dataset " + dir.string() + ": missing manifest.json");
  const std::string manifest_bytes = wire::read_file(manifest_path);
  json manifest;
  try {
    manifest = json::parse(manifest_bytes);
  } catch (const std::exception& e) {
    throw FormatError("dataset " + dir.string() + ": manifest parse error: " +
                      e.what());
  }
  if (manifest.value("format", "") != "BTA1")
    throw FormatError("dataset " + dir.string() + ": not a BTA1 manifest");

  Dataset ds;
  ds.config_ = config_from_json(manifest.at("config"));
  ds.manifest_sha256_ = sha256_hex(manifest_bytes);

  auto load_split = [&](const char* name) {
    const json& spec = manifest.at("splits").at(name);
    const std::filesystem::path path = dir / spec.at("file").get<std::string>();
    if (!std::filesystem::exists(path))
      throw FormatError("dataset " + dir.string() + ": missing split file " +
                        path.filename().string());
    const std::string bytes = wire::read_file(path);
    const std::string expected = spec.at("sha256").get<std::string>();
    if (sha256_hex(bytes) != expected)
      throw CorruptionError("dataset " + dir.string() + ": split " +
                            std::string(name) +
                            " hash does not match manifest");
    return decode_split(bytes, ds.config_, "split " + path.string());
  };
  ds.train_ = load_split("train");
  ds.val_ = load_split("val");
  return ds;
}

const std::vector<Scene>& Dataset::split(std::string_view name) const {
  if (name == "train") return train_;
  if (name == "val") return val_;
  throw InvalidArgument("dataset: unknown split '" + std::string(name) + "'");
}

std::vector<std::vector<const Scene*>> Dataset::batches(
    std::string_view split_name, std::int64_t batch_size, std::uint64_t seed,
    std::int64_t epoch) const {
  if (batch_size < 1) throw InvalidArgument("batches: batch_size must be >= 1");
  const std::vector<Scene>& scenes = split(split_name);
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Fisher-Yates with an explicitly pinned stream (std::shuffle is
  // implementation-defined).
  Rng rng(derive_seed(derive_seed(seed, "shuffle"),
                      static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<const Scene*>> result;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(
        order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Scene*> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(&scenes[order[i]]);
    result.push_back(std::move(batch));
  }
  return result;
}

}  // namespace bridgeta
