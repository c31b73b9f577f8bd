#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf::nn {

/// Reverse-mode tape over tensor-granular operations. Nodes are appended in
/// forward order, so the creation order is already a topological order and
/// backward() is a single reverse sweep. A tape is single-threaded; distinct
/// tapes share nothing.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant leaf (inputs, targets). Gradient is still computed so tests can
  /// differentiate with respect to inputs, but nothing external observes it.
  Var input(Tensor v);

  /// Leaf bound to externally owned parameter storage. The tensor must outlive
  /// the tape. Gradients accumulate on the tape and are read via grad().
  Var param(Tensor& external);

  const Tensor& value(Var v) const { return nodes_[check(v)].ext ? *nodes_[check(v)].ext : nodes_[check(v)].val; }
  const std::vector<double>& grad(Var v) const;

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var elu(Var a);
  Var relu(Var a);

  // shape / linear algebra
  Var matvec(Var w, Var x);                  // (m,n) x (n) -> (m)
  Var row(Var m, std::size_t i);             // (r,c) -> (c)
  Var concat(std::span<const Var> parts);    // 1-d concat
  Var stack_rows(std::span<const Var> rows); // T x (n) -> (T,n)
  Var flatten(Var a);
  /// Valid cross-correlation, stride 1. input (C,H,W) or (H,W); kernels
  /// (K,C,kh,kw) or (K,kh,kw) when C==1; bias (K). Output (K,H-kh+1,W-kw+1).
  Var conv2d(Var input, Var kernels, Var bias);

  // reductions
  Var mse(Var pred, Var target);             // (m)x(m) -> scalar
  Var add_scaled(double ca, Var a, double cb, Var b);  // scalars

  /// Seeds d(loss)=1 and sweeps the tape in reverse. loss must be scalar.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;            // owned value (unused when ext is set)
    Tensor* ext = nullptr; // external parameter storage
    std::vector<double> g;
    std::function<void(Tape&)> back;  // empty for leaves
    const Tensor& v() const { return ext ? *ext : val; }
  };

  int check(Var v) const;
  Var push(Tensor val, std::function<void(Tape&)> back);
  std::vector<double>& g(Var v) { return nodes_[v.id].g; }
  const Tensor& v(Var x) const { return nodes_[x.id].v(); }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace tsf::nn
