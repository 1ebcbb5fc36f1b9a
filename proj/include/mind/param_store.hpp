// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <string>
#include <unordered_map>

#include "mind/matrix.hpp"

namespace mind {

// Named parameter tensors with matching gradient buffers. Entries keep their
// insertion order; that order is the canonical serialization order for
// checkpoints and the iteration order for the optimizer, so runs stay
// deterministic. Storage is a deque so views into entries stay valid as
// parameters are added.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  Matrix& add(const std::string& name, size_t rows, size_t cols) {
    if (index_.count(name)) raise(ErrorCode::InvalidShape, "duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Matrix(rows, cols), Matrix(rows, cols)});
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Matrix& param(const std::string& name) { return entries_[index_of(name)].value; }
  const Matrix& param(const std::string& name) const { return entries_[index_of(name)].value; }
  Matrix& grad(const std::string& name) { return entries_[index_of(name)].grad; }
  const Matrix& grad(const std::string& name) const { return entries_[index_of(name)].grad; }

  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) raise(ErrorCode::InvalidShape, "unknown parameter " + name);
    return it->second;
  }

  std::deque<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mind
