#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "firemae/core/autograd.hpp"
#include "firemae/core/rng.hpp"

namespace firemae {

/// Trainable tensor with its AdamW moment buffers. Copies are deep: a copied
/// parameter owns a fresh graph leaf.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
  Tensor<T> m;
  Tensor<T> v;

  Parameter() = default;
  explicit Parameter(Tensor<T> init) : var(std::move(init), true), m(var.shape()), v(var.shape()) {}

  Parameter(const Parameter& o) : name(o.name), var(o.var.value(), true), m(o.m), v(o.v) {}
  Parameter& operator=(const Parameter& o) {
    if (this != &o) {
      name = o.name;
      var = Var<T>(o.var.value(), true);
      m = o.m;
      v = o.v;
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const Tensor<T>& value() const noexcept { return var.value(); }
  Tensor<T>& mutable_value() noexcept { return var.mutable_value(); }
  const Shape& shape() const noexcept { return var.shape(); }
  std::size_t size() const noexcept { return var.value().size(); }
};

/// Walks a model's named state. Modules implement
/// `void visit(StateVisitor<T>&, const std::string& prefix)`.
template <typename T>
struct StateVisitor {
  std::function<void(const std::string&, Parameter<T>&)> on_param = [](const std::string&, Parameter<T>&) {};
  std::function<void(const std::string&, Tensor<T>&)> on_buffer = [](const std::string&, Tensor<T>&) {};
  std::function<void(const std::string&, std::uint64_t&)> on_counter = [](const std::string&, std::uint64_t&) {};
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T, typename Model>
std::vector<Parameter<T>*> collect_parameters(Model& model, const std::string& prefix = "") {
  std::vector<Parameter<T>*> out;
  StateVisitor<T> v;
  v.on_param = [&](const std::string&, Parameter<T>& p) { out.push_back(&p); };
  model.visit(v, prefix);
  return out;
}

/// Assigns dotted path names and checks they are unique.
template <typename T, typename Model>
void name_parameters(Model& model, const std::string& prefix = "") {
  std::set<std::string> seen;
  StateVisitor<T> v;
  v.on_param = [&](const std::string& name, Parameter<T>& p) {
    if (!seen.insert(name).second) throw ConfigError("duplicate parameter name '" + name + "'");
    p.name = name;
  };
  model.visit(v, prefix);
}

template <typename T, typename Model>
std::size_t count_parameters(Model& model) {
  std::size_t total = 0;
  for (auto* p : collect_parameters<T>(model)) total += p->size();
  return total;
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->var.zero_grad();
}

template <typename T, typename Model>
std::uint64_t parameter_digest(Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto* p : collect_parameters<T>(model)) {
    h = fnv1a(p->name.data(), p->name.size(), h);
    h = fnv1a(p->value().ptr(), p->size() * sizeof(T), h);
  }
  return h;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the common default for conv layers.
template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : t.data()) x = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace firemae
