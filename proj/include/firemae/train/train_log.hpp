#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "firemae/core/checkpoint.hpp"
#include "firemae/core/rng.hpp"

namespace firemae::train {

/// JSON-lines run log. Each record keeps its deterministic content under
/// "data" and wall-clock seconds under "wall"; the digest chains only "data",
/// so identical configs and seeds give identical digests.
class TrainLog {
 public:
  TrainLog() = default;

  /// Appends to `path` (created if missing).
  explicit TrainLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open train log " + path.string());
  }

  void record(const std::string& kind, ordered_json data, double wall_seconds = 0.0) {
    ordered_json rec;
    rec["kind"] = kind;
    rec["data"] = std::move(data);
    const std::string text = rec["data"].dump();
    chain_ = fnv1a(kind.data(), kind.size(), chain_);
    chain_ = fnv1a(text.data(), text.size(), chain_);
    rec["digest"] = hex64(chain_);
    rec["wall"] = wall_seconds;
    if (out_.is_open()) {
      out_ << rec.dump() << '\n';
      out_.flush();
    }
    records_.push_back(std::move(rec));
  }

  std::uint64_t digest() const noexcept { return chain_; }
  /// Restores the chain when resuming from a checkpoint.
  void set_digest(std::uint64_t h) noexcept { chain_ = h; }
  const std::vector<ordered_json>& records() const noexcept { return records_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint64_t chain_ = 0xcbf29ce484222325ULL;
  std::vector<ordered_json> records_;
};

inline std::uint64_t rng_digest(const Rng& rng) {
  const std::string s = rng.state();
  return fnv1a(s.data(), s.size());
}

}  // namespace firemae::train
