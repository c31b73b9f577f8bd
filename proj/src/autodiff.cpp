#include "tsf/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace tsf::nn {

int Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: variable does not belong to this tape");
  return v.id;
}

Tape::Var Tape::push(Tensor val, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::input(Tensor v) { return push(std::move(v), {}); }

Tape::Var Tape::param(Tensor& external) {
  Node n;
  n.ext = &external;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const std::vector<double>& Tape::grad(Var v) const {
  if (!ran_backward_) throw std::logic_error("Tape: grad() requested before backward()");
  return nodes_[check(v)].g;
}

Tape::Var Tape::add(Var a, Var b) {
  int ia = check(a), ib = check(b);
  const Tensor &ta = v(a), &tb = v(b);
  if (ta.shape != tb.shape) throw std::invalid_argument("add: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, ib, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto &ga = t.nodes_[ia].g, &gb = t.nodes_[ib].g;
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  int ia = check(a), ib = check(b);
  const Tensor &ta = v(a), &tb = v(b);
  if (ta.shape != tb.shape) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, ib, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto &ga = t.nodes_[ia].g, &gb = t.nodes_[ib].g;
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] -= go[i];
    }
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  int ia = check(a), ib = check(b);
  const Tensor &ta = v(a), &tb = v(b);
  if (ta.shape != tb.shape) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, ib, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto &va = t.nodes_[ia].v(), &vb = t.nodes_[ib].v();
    auto &ga = t.nodes_[ia].g, &gb = t.nodes_[ib].g;
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * vb.data[i];
      gb[i] += go[i] * va.data[i];
    }
  });
}

Tape::Var Tape::scale(Var a, double c) {
  int ia = check(a);
  Tensor out = v(a);
  for (auto& x : out.data) x *= c;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, c, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto& ga = t.nodes_[ia].g;
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Tape::Var Tape::sigmoid(Var a) {
  int ia = check(a);
  Tensor out = v(a);
  for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto& y = t.nodes_[self].v();
    auto& ga = t.nodes_[ia].g;
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Tape::Var Tape::tanh(Var a) {
  int ia = check(a);
  Tensor out = v(a);
  for (auto& x : out.data) x = std::tanh(x);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto& y = t.nodes_[self].v();
    auto& ga = t.nodes_[ia].g;
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Tape::Var Tape::elu(Var a) {
  int ia = check(a);
  Tensor out = v(a);
  for (auto& x : out.data) x = x > 0.0 ? x : std::expm1(x);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto& xin = t.nodes_[ia].v();
    const auto& y = t.nodes_[self].v();
    auto& ga = t.nodes_[ia].g;
    // d/dx elu = 1 for x>0, exp(x) = y+1 otherwise
    for (std::size_t i = 0; i < go.size(); ++i)
      ga[i] += go[i] * (xin.data[i] > 0.0 ? 1.0 : y.data[i] + 1.0);
  });
}

Tape::Var Tape::relu(Var a) {
  int ia = check(a);
  Tensor out = v(a);
  for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto& xin = t.nodes_[ia].v();
    auto& ga = t.nodes_[ia].g;
    for (std::size_t i = 0; i < go.size(); ++i)
      if (xin.data[i] > 0.0) ga[i] += go[i];
  });
}

Tape::Var Tape::matvec(Var w, Var x) {
  int iw = check(w), ix = check(x);
  const Tensor &tw = v(w), &tx = v(x);
  if (tw.ndim() != 2 || tx.ndim() != 1 || tw.dim(1) != tx.dim(0))
    throw std::invalid_argument("matvec: dimension mismatch");
  const std::size_t m = tw.dim(0), n = tw.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* wr = &tw.data[i * n];
    for (std::size_t j = 0; j < n; ++j) s += wr[j] * tx.data[j];
    out.data[i] = s;
  }
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [iw, ix, m, n, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto &vw = t.nodes_[iw].v(), &vx = t.nodes_[ix].v();
    auto &gw = t.nodes_[iw].g, &gx = t.nodes_[ix].g;
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = go[i];
      if (gi == 0.0) continue;
      const double* wr = &vw.data[i * n];
      double* gwr = &gw[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        gwr[j] += gi * vx.data[j];
        gx[j] += gi * wr[j];
      }
    }
  });
}

Tape::Var Tape::row(Var mvar, std::size_t i) {
  int im = check(mvar);
  const Tensor& tm = v(mvar);
  if (tm.ndim() != 2 || i >= tm.dim(0)) throw std::invalid_argument("row: index out of range");
  const std::size_t c = tm.dim(1);
  Tensor out({c});
  std::copy_n(&tm.data[i * c], c, out.data.begin());
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [im, i, c, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto& gm = t.nodes_[im].g;
    for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += go[j];
  });
}

Tape::Var Tape::concat(std::span<const Var> parts) {
  std::vector<int> ids;
  std::size_t total = 0;
  for (auto p : parts) {
    ids.push_back(check(p));
    if (v(p).ndim() != 1) throw std::invalid_argument("concat: 1-d parts required");
    total += v(p).size();
  }
  Tensor out({total});
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& tp = v(p);
    std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off);
    off += tp.size();
  }
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ids, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    std::size_t off = 0;
    for (int id : ids) {
      auto& gp = t.nodes_[id].g;
      for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += go[off + j];
      off += gp.size();
    }
  });
}

Tape::Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) return input(Tensor({0, 0}));
  std::vector<int> ids;
  const std::size_t c = v(rows[0]).size();
  for (auto r : rows) {
    ids.push_back(check(r));
    if (v(r).ndim() != 1 || v(r).size() != c)
      throw std::invalid_argument("stack_rows: equal-length 1-d rows required");
  }
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(v(rows[i]).data.begin(), c, out.data.begin() + i * c);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ids, c, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& gr = t.nodes_[ids[i]].g;
      for (std::size_t j = 0; j < c; ++j) gr[j] += go[i * c + j];
    }
  });
}

Tape::Var Tape::flatten(Var a) {
  int ia = check(a);
  Tensor out({v(a).size()}, v(a).data);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto& ga = t.nodes_[ia].g;
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Tape::Var Tape::conv2d(Var in, Var kernels, Var bias) {
  int ii = check(in), ik = check(kernels), ib = check(bias);
  const Tensor &ti = v(in), &tk = v(kernels), &tb = v(bias);
  std::size_t C, H, W;
  if (ti.ndim() == 2) {
    C = 1;
    H = ti.dim(0);
    W = ti.dim(1);
  } else if (ti.ndim() == 3) {
    C = ti.dim(0);
    H = ti.dim(1);
    W = ti.dim(2);
  } else {
    throw std::invalid_argument("conv2d: input must be (H,W) or (C,H,W)");
  }
  std::size_t K, KC, kh, kw;
  if (tk.ndim() == 3) {
    K = tk.dim(0);
    KC = 1;
    kh = tk.dim(1);
    kw = tk.dim(2);
  } else if (tk.ndim() == 4) {
    K = tk.dim(0);
    KC = tk.dim(1);
    kh = tk.dim(2);
    kw = tk.dim(3);
  } else {
    throw std::invalid_argument("conv2d: kernels must be (K,kh,kw) or (K,C,kh,kw)");
  }
  if (KC != C) throw std::invalid_argument("conv2d: channel mismatch");
  if (tb.size() != K) throw std::invalid_argument("conv2d: bias size mismatch");
  if (H < kh || W < kw) throw std::invalid_argument("conv2d: input smaller than kernel");
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  Tensor out({K, OH, OW});
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double s = tb.data[k];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx)
              s += tk.data[((k * C + c) * kh + dy) * kw + dx] *
                   ti.data[(c * H + oy + dy) * W + ox + dx];
        out.data[(k * OH + oy) * OW + ox] = s;
      }
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ii, ik, ib, C, H, W, K, kh, kw, OH, OW, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    const auto &vi = t.nodes_[ii].v(), &vk = t.nodes_[ik].v();
    auto &gi = t.nodes_[ii].g, &gk = t.nodes_[ik].g, &gb = t.nodes_[ib].g;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          const double gout = go[(k * OH + oy) * OW + ox];
          if (gout == 0.0) continue;
          gb[k] += gout;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                gk[((k * C + c) * kh + dy) * kw + dx] += gout * vi.data[(c * H + oy + dy) * W + ox + dx];
                gi[(c * H + oy + dy) * W + ox + dx] += gout * vk.data[((k * C + c) * kh + dy) * kw + dx];
              }
        }
  });
}

Tape::Var Tape::mse(Var pred, Var target) {
  int ip = check(pred), it = check(target);
  const Tensor &tp = v(pred), &tt = v(target);
  if (tp.shape != tt.shape) throw std::invalid_argument("mse: shape mismatch");
  const std::size_t m = tp.size();
  if (m == 0) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = tp.data[i] - tt.data[i];
    s += d * d;
  }
  Tensor out({1});
  out.data[0] = s / static_cast<double>(m);
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ip, it, m, self](Tape& t) {
    const double go = t.nodes_[self].g[0];
    const auto &vp = t.nodes_[ip].v(), &vt = t.nodes_[it].v();
    auto &gp = t.nodes_[ip].g, &gt = t.nodes_[it].g;
    const double c = 2.0 * go / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = vp.data[i] - vt.data[i];
      gp[i] += c * d;
      gt[i] -= c * d;
    }
  });
}

Tape::Var Tape::add_scaled(double ca, Var a, double cb, Var b) {
  int ia = check(a), ib = check(b);
  const Tensor &ta = v(a), &tb = v(b);
  if (ta.shape != tb.shape) throw std::invalid_argument("add_scaled: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ca * ta.data[i] + cb * tb.data[i];
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [ia, ib, ca, cb, self](Tape& t) {
    const auto& go = t.nodes_[self].g;
    auto &ga = t.nodes_[ia].g, &gb = t.nodes_[ib].g;
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += ca * go[i];
      gb[i] += cb * go[i];
    }
  });
}

void Tape::backward(Var loss) {
  int l = check(loss);
  if (nodes_[l].v().size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  for (auto& n : nodes_) n.g.assign(n.v().size(), 0.0);
  nodes_[l].g[0] = 1.0;
  for (int i = l; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this);
  ran_backward_ = true;
}

}  // namespace tsf::nn
