#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsf::nn {

inline std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

/// Dense row-major n-d array of doubles with an optional gradient buffer.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless alloc_grad() was called

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(numel(shape), 0.0) {}

  Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch (" + std::to_string(numel(shape)) +
                                  " vs " + std::to_string(data.size()) + ")");
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor vec(std::vector<double> d) {
    std::vector<std::size_t> s{d.size()};
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor mat(std::size_t r, std::size_t c, std::vector<double> d) {
    return Tensor({r, c}, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  void alloc_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what) {
  if (t.shape != shape) {
    std::string msg = std::string(what) + ": expected shape (";
    for (std::size_t i = 0; i < shape.size(); ++i) msg += (i ? "," : "") + std::to_string(shape[i]);
    msg += "), got (";
    for (std::size_t i = 0; i < t.shape.size(); ++i) msg += (i ? "," : "") + std::to_string(t.shape[i]);
    msg += ")";
    throw std::invalid_argument(msg);
  }
}

}  // namespace tsf::nn
