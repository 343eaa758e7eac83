#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wavebank/autodiff.hpp"
#include "wavebank/tensor.hpp"

namespace wavebank {

// Ordered registry of named tensors referenced (not owned) by the store.
// Registration order is fixed at construction time and defines the
// optimizer's and checkpoint's traversal order, which keeps training
// bit-reproducible. Non-trainable entries hold state such as batch-norm
// running averages.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor* value;
    bool trainable;
  };

  void add(std::string name, Tensor* value, bool trainable = true);
  bool has(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  int64_t total_size(bool trainable_only) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Per-tape leaves for every trainable entry, looked up by name during a
// forward pass.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store);
  Var var(std::string_view name) const;

 private:
  std::unordered_map<std::string, Var> vars_;
};

}  // namespace wavebank
