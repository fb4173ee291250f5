#pragma once

// Named parameter storage. Paths are unique, iteration is sorted, and
// optimizer state hides under the reserved "__opt__/" prefix so that
// checkpoints can carry it without it looking like a learnable tensor.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowsr/tensor.hpp"

namespace flowsr {

inline constexpr const char* kOptPrefix = "__opt__/";

inline bool is_reserved_path(const std::string& path) {
  return path.rfind(kOptPrefix, 0) == 0;
}

template <class T>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void set(const std::string& path, Tensor<T> t) { items_[path] = std::move(t); }

  bool has(const std::string& path) const { return items_.count(path) != 0; }

  const Tensor<T>& at(const std::string& path) const {
    auto it = items_.find(path);
    if (it == items_.end()) fail_contract("unknown parameter path: " + path);
    return it->second;
  }

  Tensor<T>& at(const std::string& path) {
    auto it = items_.find(path);
    if (it == items_.end()) fail_contract("unknown parameter path: " + path);
    return it->second;
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  typename Map::const_iterator begin() const { return items_.begin(); }
  typename Map::const_iterator end() const { return items_.end(); }

  // Sorted list of non-reserved paths.
  std::vector<std::string> learnable_paths() const {
    std::vector<std::string> out;
    for (const auto& [path, t] : items_)
      if (!is_reserved_path(path)) out.push_back(path);
    return out;
  }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& [path, t] : items_)
      if (!is_reserved_path(path)) n += t.numel();
    return n;
  }

  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }
  void bump_version() { ++version_; }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.set_version(version_);
    for (const auto& [path, t] : items_) out.set(path, t.template cast<U>());
    return out;
  }

 private:
  Map items_;
  std::uint64_t version_ = 1;
};

}  // namespace flowsr
