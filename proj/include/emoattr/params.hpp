#pragma once

#include <map>
#include <string>
#include <vector>

#include "emoattr/tensor.hpp"

namespace emoattr {

// Named parameter tensors with a trainable flag. Names are unique; iteration
// order is the sorted name order, so optimizer sweeps are deterministic.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor value, bool trainable);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool is_trainable(const std::string& name) const;

  std::vector<std::string> names() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

  // Total element count across entries with the given flag.
  std::size_t element_count(bool trainable) const;

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace emoattr
