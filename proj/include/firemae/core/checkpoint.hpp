#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "firemae/core/parameter.hpp"

namespace firemae {

using ordered_json = nlohmann::ordered_json;

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "float32";
  else if constexpr (std::is_same_v<T, double>) return "float64";
  else if constexpr (std::is_same_v<T, std::int64_t>) return "int64";
  else if constexpr (std::is_same_v<T, std::uint8_t>) return "uint8";
  else static_assert(sizeof(T) == 0, "unsupported dtype");
}

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32") return 4;
  if (dtype == "float64" || dtype == "int64") return 8;
  if (dtype == "uint8") return 1;
  throw IoError("unknown dtype '" + dtype + "'");
}

/// Copies `count` little-endian elements of `size` bytes.
inline void copy_le(const void* src, void* dst, std::size_t count, std::size_t size) {
  std::memcpy(dst, src, count * size);
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = static_cast<unsigned char*>(dst);
    for (std::size_t i = 0; i < count; ++i) std::reverse(p + i * size, p + (i + 1) * size);
  }
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace detail

/// Named tensors plus a config echo. On disk: `manifest.json` lists
/// {name, shape, dtype, byte_offset, byte_length} in order and `weights.bin`
/// holds the little-endian buffers back to back.
class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::string dtype;
    std::vector<unsigned char> bytes;
  };

  ordered_json config = ordered_json::object();

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    Entry e{name, t.shape(), detail::dtype_name<T>(), std::vector<unsigned char>(t.size() * sizeof(T))};
    detail::copy_le(t.ptr(), e.bytes.data(), t.size(), sizeof(T));
    insert(std::move(e));
  }

  void put_counter(const std::string& name, std::uint64_t value) {
    const auto v = static_cast<std::int64_t>(value);
    Entry e{name, {1}, "int64", std::vector<unsigned char>(8)};
    detail::copy_le(&v, e.bytes.data(), 1, 8);
    insert(std::move(e));
  }

  /// Reads a tensor, converting between float32 and float64 if needed.
  template <typename T>
  Tensor<T> get(const std::string& name) const {
    const Entry& e = entry(name);
    Tensor<T> out(e.shape);
    if (e.dtype == "float32") {
      std::vector<float> tmp(out.size());
      detail::copy_le(e.bytes.data(), tmp.data(), tmp.size(), 4);
      std::copy(tmp.begin(), tmp.end(), out.ptr());
    } else if (e.dtype == "float64") {
      std::vector<double> tmp(out.size());
      detail::copy_le(e.bytes.data(), tmp.data(), tmp.size(), 8);
      std::copy(tmp.begin(), tmp.end(), out.ptr());
    } else {
      throw IoError("checkpoint entry '" + name + "' has dtype " + e.dtype + ", expected a float type");
    }
    return out;
  }

  std::uint64_t get_counter(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != "int64") throw IoError("checkpoint entry '" + name + "' is not an int64 counter");
    std::int64_t v = 0;
    detail::copy_le(e.bytes.data(), &v, 1, 8);
    return static_cast<std::uint64_t>(v);
  }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IoError("checkpoint has no entry '" + name + "'");
    return entries_[it->second];
  }

  ordered_json manifest() const {
    ordered_json m = ordered_json::object();
    m["format"] = "firemae-checkpoint";
    m["version"] = 1;
    m["config"] = config;
    ordered_json list = ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& e : entries_) {
      ordered_json j = ordered_json::object();
      j["name"] = e.name;
      j["shape"] = e.shape;
      j["dtype"] = e.dtype;
      j["byte_offset"] = offset;
      j["byte_length"] = e.bytes.size();
      offset += e.bytes.size();
      list.push_back(std::move(j));
    }
    m["tensors"] = std::move(list);
    return m;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const std::string text = manifest().dump(2) + "\n";
    detail::write_file(dir / "manifest.json", text.data(), text.size());
    std::vector<unsigned char> blob;
    for (const auto& e : entries_) blob.insert(blob.end(), e.bytes.begin(), e.bytes.end());
    detail::write_file(dir / "weights.bin", blob.data(), blob.size());
  }

  static Checkpoint load(const std::filesystem::path& dir) {
    const auto text = detail::read_file(dir / "manifest.json");
    ordered_json m;
    try {
      m = ordered_json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("malformed manifest in " + dir.string() + ": " + ex.what());
    }
    if (m.value("format", "") != "firemae-checkpoint") throw IoError(dir.string() + " is not a firemae checkpoint");
    const auto blob = detail::read_file(dir / "weights.bin");
    Checkpoint ck;
    ck.config = m.at("config");
    for (const auto& j : m.at("tensors")) {
      Entry e;
      e.name = j.at("name").get<std::string>();
      e.shape = j.at("shape").get<Shape>();
      e.dtype = j.at("dtype").get<std::string>();
      const auto off = j.at("byte_offset").get<std::uint64_t>();
      const auto len = j.at("byte_length").get<std::uint64_t>();
      if (len != numel(e.shape) * detail::dtype_size(e.dtype)) throw IoError("entry '" + e.name + "' length does not match its shape");
      if (off + len > blob.size()) throw IoError("entry '" + e.name + "' runs past the end of weights.bin");
      e.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(off), blob.begin() + static_cast<std::ptrdiff_t>(off + len));
      ck.insert(std::move(e));
    }
    return ck;
  }

 private:
  void insert(Entry e) {
    auto it = index_.find(e.name);
    if (it != index_.end()) {
      entries_[it->second] = std::move(e);
      return;
    }
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Writes every parameter, buffer and counter of `model` under `prefix`.
template <typename T, typename Model>
void save_state(Model& model, Checkpoint& ck, const std::string& prefix) {
  StateVisitor<T> v;
  v.on_param = [&](const std::string& n, Parameter<T>& p) { ck.put(n, p.value()); };
  v.on_buffer = [&](const std::string& n, Tensor<T>& t) { ck.put(n, t); };
  v.on_counter = [&](const std::string& n, std::uint64_t& c) { ck.put_counter(n, c); };
  model.visit(v, prefix);
}

/// Restores state saved under `prefix`. Every tensor must be present with the
/// same shape.
template <typename T, typename Model>
void load_state(Model& model, const Checkpoint& ck, const std::string& prefix) {
  auto fetch = [&](const std::string& n, Tensor<T>& dst) {
    if (!ck.contains(n)) throw ConfigError("checkpoint is missing '" + n + "'");
    Tensor<T> src = ck.get<T>(n);
    if (src.shape() != dst.shape())
      throw ConfigError("checkpoint entry '" + n + "' has shape " + shape_str(src.shape()) + ", model expects " + shape_str(dst.shape()));
    dst = std::move(src);
  };
  StateVisitor<T> v;
  v.on_param = [&](const std::string& n, Parameter<T>& p) {
    fetch(n, p.mutable_value());
    p.var.zero_grad();
  };
  v.on_buffer = fetch;
  v.on_counter = [&](const std::string& n, std::uint64_t& c) {
    if (!ck.contains(n)) throw ConfigError("checkpoint is missing '" + n + "'");
    c = ck.get_counter(n);
  };
  model.visit(v, prefix);
}

/// AdamW moments, stored as `<prefix>.m.<name>` / `<prefix>.v.<name>`.
template <typename T>
void save_optimizer(const std::vector<Parameter<T>*>& params, Checkpoint& ck, const std::string& prefix) {
  for (auto* p : params) {
    ck.put(prefix + ".m." + p->name, p->m.shape() == p->shape() ? p->m : Tensor<T>(p->shape()));
    ck.put(prefix + ".v." + p->name, p->v.shape() == p->shape() ? p->v : Tensor<T>(p->shape()));
  }
}

template <typename T>
void load_optimizer(const std::vector<Parameter<T>*>& params, const Checkpoint& ck, const std::string& prefix) {
  for (auto* p : params) {
    p->m = ck.get<T>(prefix + ".m." + p->name);
    p->v = ck.get<T>(prefix + ".v." + p->name);
  }
}

}  // namespace firemae
