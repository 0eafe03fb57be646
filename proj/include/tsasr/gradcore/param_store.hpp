#pragma once

#include "tsasr/gradcore/matrix.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsasr {

/// A stored dense array. `requires_grad` doubles as the trainable flag when the
/// tensor lives in a ParamStore.
template <typename Scalar>
struct Tensor {
  Matrix<Scalar> data;
  bool requires_grad = false;
  std::optional<Matrix<Scalar>> grad;

  Shape shape() const { return shape_of(data); }
};

/// Named parameters with per-entry trainable flags. Iteration order is the
/// lexicographic order of names, which fixes checkpoint layout and checksums.
template <typename Scalar>
class ParamStore {
 public:
  using Entries = std::map<std::string, Tensor<Scalar>>;

  void add(const std::string& name, Matrix<Scalar> value, bool trainable);
  void erase(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Matrix<Scalar>& value(const std::string& name) const;
  Matrix<Scalar>& mutable_value(const std::string& name);
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);
  void set_all_trainable(bool trainable);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Total scalar count, optionally restricted to trainable entries.
  std::uint64_t parameter_count(bool trainable_only = false) const;

  /// FNV-1a over names, shapes, flags and raw value bytes.
  std::uint64_t checksum() const;

  const Entries& entries() const { return entries_; }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, t] : entries_) out.add(name, t.data.template cast<Other>(), t.requires_grad);
    return out;
  }

 private:
  const Tensor<Scalar>& at(const std::string& name) const;
  Tensor<Scalar>& at(const std::string& name);

  Entries entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace tsasr
