#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tsf/tensor.hpp"

namespace tsf::io {

/// Flat binary container: magic bytes, then named entries that are either
/// little-endian 64-bit float arrays with a shape table or raw strings.
/// Used for model and blender serialization; round-trips are bit-exact.
class Container {
 public:
  void put_tensor(const std::string& name, const nn::Tensor& t) { tensors_[name] = t; }
  void put_string(const std::string& name, const std::string& s) { strings_[name] = s; }
  void put_scalar(const std::string& name, double v) { tensors_[name] = nn::Tensor({1}, {v}); }

  bool has_tensor(const std::string& name) const { return tensors_.count(name) > 0; }
  const nn::Tensor& tensor(const std::string& name) const;
  const std::string& str(const std::string& name) const;
  double scalar(const std::string& name) const { return tensor(name).data.at(0); }

  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  std::map<std::string, nn::Tensor> tensors_;
  std::map<std::string, std::string> strings_;
};

}  // namespace tsf::io
