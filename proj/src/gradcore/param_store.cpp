#include "tsasr/gradcore/param_store.hpp"

#include "tsasr/errors.hpp"

#include <cstring>

namespace tsasr {

std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view text) {
  if (text == "f32" || text == "32") return Precision::f32;
  if (text == "f64" || text == "64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(text) + "' (expected f32 or f64)");
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename Scalar>
void ParamStore<Scalar>::add(const std::string& name, Matrix<Scalar> value, bool trainable) {
  if (name.empty()) throw ContractError("parameter name must be non-empty");
  auto [it, inserted] = entries_.try_emplace(name);
  if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
  it->second.data = std::move(value);
  it->second.requires_grad = trainable;
}

template <typename Scalar>
void ParamStore<Scalar>::erase(const std::string& name) {
  if (entries_.erase(name) == 0) throw ContractError("unknown parameter '" + name + "'");
}

template <typename Scalar>
const Tensor<Scalar>& ParamStore<Scalar>::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename Scalar>
Tensor<Scalar>& ParamStore<Scalar>::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename Scalar>
const Matrix<Scalar>& ParamStore<Scalar>::value(const std::string& name) const {
  return at(name).data;
}

template <typename Scalar>
Matrix<Scalar>& ParamStore<Scalar>::mutable_value(const std::string& name) {
  return at(name).data;
}

template <typename Scalar>
bool ParamStore<Scalar>::trainable(const std::string& name) const {
  return at(name).requires_grad;
}

template <typename Scalar>
void ParamStore<Scalar>::set_trainable(const std::string& name, bool trainable) {
  at(name).requires_grad = trainable;
}

template <typename Scalar>
void ParamStore<Scalar>::set_all_trainable(bool trainable) {
  for (auto& [_, t] : entries_) t.requires_grad = trainable;
}

template <typename Scalar>
std::vector<std::string> ParamStore<Scalar>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

template <typename Scalar>
std::vector<std::string> ParamStore<Scalar>::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : entries_)
    if (t.requires_grad) out.push_back(name);
  return out;
}

template <typename Scalar>
std::uint64_t ParamStore<Scalar>::parameter_count(bool trainable_only) const {
  std::uint64_t n = 0;
  for (const auto& [_, t] : entries_)
    if (!trainable_only || t.requires_grad) n += static_cast<std::uint64_t>(t.data.size());
  return n;
}

template <typename Scalar>
std::uint64_t ParamStore<Scalar>::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : entries_) {
    feed(name.data(), name.size());
    const std::int64_t dims[2] = {t.data.rows(), t.data.cols()};
    feed(dims, sizeof(dims));
    const unsigned char flag = t.requires_grad ? 1 : 0;
    feed(&flag, 1);
    feed(t.data.data(), sizeof(Scalar) * static_cast<std::size_t>(t.data.size()));
  }
  return h;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace tsasr
