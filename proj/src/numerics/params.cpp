#include "openvision/params.hpp"

#include <cstring>

namespace openvision {

template <typename T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value, bool decay) {
  require(!contains(name), ErrorKind::config, "duplicate parameter name '" + name + "'");
  auto& p = params_[name];
  p.value = std::move(value);
  p.decay = decay;
  return p;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::config,
          "unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::config,
          "unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad.shape() != p.value.shape()) {
      p.grad = Tensor<T>(p.value.shape());
    } else {
      p.grad.fill(T(0));
    }
  }
}

template <typename T>
void ParameterStore<T>::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (starts_with(name, prefix)) {
      p.trainable = trainable;
    }
  }
}

template <typename T>
std::int64_t ParameterStore<T>::count(std::string_view prefix) const {
  std::int64_t total = 0;
  for (const auto& [name, p] : params_) {
    if (starts_with(name, prefix)) {
      total += p.value.size();
    }
  }
  return total;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (starts_with(name, prefix)) {
      out.push_back(name);
    }
  }
  return out;
}

template <typename T>
ParameterStore<T> ParameterStore<T>::subset(const std::vector<std::string>& prefixes) const {
  ParameterStore out;
  for (const auto& [name, p] : params_) {
    for (const auto& prefix : prefixes) {
      if (starts_with(name, prefix)) {
        auto& q = out.add(name, p.value, p.decay);
        q.trainable = p.trainable;
        break;
      }
    }
  }
  return out;
}

template <typename T>
void ParameterStore<T>::merge(const ParameterStore& other) {
  for (const auto& [name, p] : other.params_) {
    auto& q = params_[name];
    q.value = p.value;
    q.decay = p.decay;
    q.trainable = p.trainable;
    q.grad = Tensor<T>();
  }
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

}  // namespace

template <typename T>
std::uint64_t ParameterStore<T>::hash(std::string_view prefix) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, p] : params_) {
    if (!starts_with(name, prefix)) {
      continue;
    }
    fnv_bytes(h, name.data(), name.size());
    for (auto d : p.value.shape()) {
      fnv_bytes(h, &d, sizeof(d));
    }
    fnv_bytes(h, p.value.ptr(), static_cast<std::size_t>(p.value.size()) * sizeof(T));
  }
  return h;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace openvision
