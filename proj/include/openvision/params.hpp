#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "openvision/tensor.hpp"

namespace openvision {

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a backward pass touches it
  bool trainable = true;
  bool decay = true;  // decoupled weight decay applies (matrices only by default)
};

// Named parameter collection ordered by name, so iteration order (and therefore
// every reduction over parameters) is fixed.
template <typename T>
class ParameterStore {
 public:
  using Map = std::map<std::string, Parameter<T>, std::less<>>;

  Parameter<T>& add(const std::string& name, Tensor<T> value, bool decay);
  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  const Tensor<T>& value(std::string_view name) const { return at(name).value; }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void set_trainable(std::string_view prefix, bool trainable);

  std::int64_t count(std::string_view prefix = "") const;
  std::vector<std::string> names(std::string_view prefix = "") const;

  // Copy of every parameter whose name starts with one of `prefixes`.
  ParameterStore subset(const std::vector<std::string>& prefixes) const;
  void merge(const ParameterStore& other);  // insert or overwrite

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, p] : params_) {
      auto& q = out.add(name, p.value.template cast<U>(), p.decay);
      q.trainable = p.trainable;
    }
    return out;
  }

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash(std::string_view prefix = "") const;

 private:
  Map params_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace openvision
