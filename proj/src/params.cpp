#include "emoattr/params.hpp"

#include "emoattr/error.hpp"

namespace emoattr {

void ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  if (entries_.count(name) > 0) {
    throw ArgumentError("parameter '" + name + "' already exists");
  }
  entries_.emplace(name, Entry{std::move(value), trainable});
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArgumentError("unknown parameter '" + name + "'");
  }
  return it->second.value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArgumentError("unknown parameter '" + name + "'");
  }
  return it->second.value;
}

bool ParameterStore::is_trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ArgumentError("unknown parameter '" + name + "'");
  }
  return it->second.trainable;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::element_count(bool trainable) const {
  std::size_t total = 0;
  for (const auto& [name, entry] : entries_) {
    if (entry.trainable == trainable) total += entry.value.size();
  }
  return total;
}

}  // namespace emoattr
