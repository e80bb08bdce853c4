#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "firemae/data/generator.hpp"

namespace firemae::data {

inline std::string scene_dir_name(std::size_t i) {
  std::string s = std::to_string(i);
  return "scene_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// n synthetic scenes; scene i uses seed derive(seed, i) so any prefix of a
/// dataset is reproducible on its own.
inline std::vector<SceneContainer> generate_scenes(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg = {}) {
  if (n == 0) throw ConfigError("generate_scenes: need at least one scene");
  std::vector<SceneContainer> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen_synthetic_scene(Rng::derive(seed, i).next_u64(), cfg));
  return out;
}

/// Writes scene directories plus split.json (70/15/15 in generation order).
inline SplitIndex write_dataset(const std::vector<SceneContainer>& scenes, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::vector<std::string> dirs;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    dirs.push_back(scene_dir_name(i));
    save_scene(scenes[i], root / dirs.back());
  }
  const SplitIndex split = SplitIndex::partition(dirs);
  save_split(split, root);
  return split;
}

/// In-memory split matching write_dataset.
struct SceneSplits {
  std::vector<SceneContainer> train, val, test;
};

inline SceneSplits split_scenes(const std::vector<SceneContainer>& scenes) {
  std::vector<std::string> dirs;
  for (std::size_t i = 0; i < scenes.size(); ++i) dirs.push_back(std::to_string(i));
  const SplitIndex idx = SplitIndex::partition(dirs);
  SceneSplits s;
  for (const auto& d : idx.train) s.train.push_back(scenes[std::stoul(d)]);
  for (const auto& d : idx.val) s.val.push_back(scenes[std::stoul(d)]);
  for (const auto& d : idx.test) s.test.push_back(scenes[std::stoul(d)]);
  return s;
}

}  // namespace firemae::data
