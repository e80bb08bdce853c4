#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "firemae/core/checkpoint.hpp"

namespace firemae::data {

/// Single-band raster scene with validity and fire masks. Labels on invalid
/// pixels may be stored but never count toward a loss or metric.
struct SceneContainer {
  std::string scene_id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> raster;            // raw digital numbers, row-major
  std::vector<std::uint8_t> valid_mask;  // 1 = valid
  std::vector<std::uint8_t> label_mask;  // 1 = fire
  std::int64_t timestamp = 0;
  ordered_json meta = ordered_json::object();

  std::size_t pixels() const noexcept { return height * width; }

  void check() const {
    if (raster.size() != pixels() || valid_mask.size() != pixels() || label_mask.size() != pixels())
      throw ShapeError("SceneContainer", "buffers do not match " + std::to_string(height) + "x" + std::to_string(width));
  }
};

/// Scene directory: scene.json + raster.bin (float32 LE) + valid.bin/label.bin (uint8).
inline void save_scene(const SceneContainer& scene, const std::filesystem::path& dir) {
  scene.check();
  std::filesystem::create_directories(dir);
  ordered_json j = ordered_json::object();
  j["scene_id"] = scene.scene_id;
  j["height"] = scene.height;
  j["width"] = scene.width;
  j["timestamp"] = scene.timestamp;
  j["raster"] = {{"file", "raster.bin"}, {"dtype", "float32"}, {"order", "row-major"}};
  j["valid"] = {{"file", "valid.bin"}, {"dtype", "uint8"}};
  j["label"] = {{"file", "label.bin"}, {"dtype", "uint8"}};
  j["meta"] = scene.meta;
  const std::string text = j.dump(2) + "\n";
  detail::write_file(dir / "scene.json", text.data(), text.size());
  std::vector<unsigned char> raster(scene.raster.size() * 4);
  detail::copy_le(scene.raster.data(), raster.data(), scene.raster.size(), 4);
  detail::write_file(dir / "raster.bin", raster.data(), raster.size());
  detail::write_file(dir / "valid.bin", scene.valid_mask.data(), scene.valid_mask.size());
  detail::write_file(dir / "label.bin", scene.label_mask.data(), scene.label_mask.size());
}

inline SceneContainer load_scene(const std::filesystem::path& dir) {
  const auto text = detail::read_file(dir / "scene.json");
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("malformed scene.json in " + dir.string() + ": " + ex.what());
  }
  SceneContainer s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.timestamp = j.value("timestamp", std::int64_t{0});
  s.meta = j.value("meta", ordered_json::object());
  const auto raster = detail::read_file(dir / j.at("raster").at("file").get<std::string>());
  if (raster.size() != s.pixels() * 4) throw IoError(dir.string() + ": raster.bin has wrong length");
  s.raster.resize(s.pixels());
  detail::copy_le(raster.data(), s.raster.data(), s.pixels(), 4);
  auto valid = detail::read_file(dir / j.at("valid").at("file").get<std::string>());
  auto label = detail::read_file(dir / j.at("label").at("file").get<std::string>());
  s.valid_mask.assign(valid.begin(), valid.end());
  s.label_mask.assign(label.begin(), label.end());
  s.check();
  return s;
}

/// Dataset index: scene directories (relative to the dataset root) per split.
struct SplitIndex {
  std::vector<std::string> train, val, test;

  const std::vector<std::string>& get(const std::string& split) const {
    if (split == "train") return train;
    if (split == "val") return val;
    if (split == "test") return test;
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  }

  /// 70/15/15 split of n scenes in order: val and test get round(0.15 n) each.
  static SplitIndex partition(const std::vector<std::string>& dirs) {
    const std::size_t n = dirs.size();
    const auto held = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
    const std::size_t n_train = n >= 2 * held ? n - 2 * held : 0;
    SplitIndex s;
    s.train.assign(dirs.begin(), dirs.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(dirs.begin() + static_cast<std::ptrdiff_t>(n_train), dirs.begin() + static_cast<std::ptrdiff_t>(n_train + held));
    s.test.assign(dirs.begin() + static_cast<std::ptrdiff_t>(n_train + held), dirs.end());
    return s;
  }
};

inline void save_split(const SplitIndex& s, const std::filesystem::path& root) {
  ordered_json j = ordered_json::object();
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  const std::string text = j.dump(2) + "\n";
  detail::write_file(root / "split.json", text.data(), text.size());
}

inline SplitIndex load_split(const std::filesystem::path& root) {
  const auto text = detail::read_file(root / "split.json");
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("malformed split.json in " + root.string() + ": " + ex.what());
  }
  SplitIndex s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

inline std::vector<SceneContainer> load_scenes(const std::filesystem::path& root, const std::string& split) {
  const auto idx = load_split(root);
  std::vector<SceneContainer> out;
  for (const auto& d : idx.get(split)) out.push_back(load_scene(root / d));
  return out;
}

}  // namespace firemae::data
