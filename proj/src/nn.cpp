#include "tsf/nn.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace tsf::nn {

Tensor elu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data) v = v > 0.0 ? v : std::expm1(v);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

namespace {

void check_lstm_shapes(const LstmParams& p) {
  const std::vector<std::size_t> ws{p.hidden_dim, p.input_dim + p.hidden_dim};
  const std::vector<std::size_t> bs{p.hidden_dim};
  for (const Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) require_shape(*w, ws, "lstm gate weight");
  for (const Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) require_shape(*b, bs, "lstm gate bias");
}

void matvec_into(const Tensor& w, const double* x, double* y) {
  const std::size_t m = w.dim(0), n = w.dim(1);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* wr = &w.data[i * n];
    for (std::size_t j = 0; j < n; ++j) s += wr[j] * x[j];
    y[i] = s;
  }
}

}  // namespace

Tensor lstm_forward(const LstmParams& p, const Tensor& seq,
                    const std::pair<Tensor, Tensor>& init_state) {
  check_lstm_shapes(p);
  if (seq.ndim() != 2 || seq.dim(1) != p.input_dim)
    throw std::invalid_argument("lstm_forward: sequence width must equal input_dim");
  require_shape(init_state.first, {p.hidden_dim}, "lstm initial hidden");
  require_shape(init_state.second, {p.hidden_dim}, "lstm initial cell");

  const std::size_t T = seq.dim(0), H = p.hidden_dim, D = p.input_dim;
  Tensor out({T, H});
  std::vector<double> h = init_state.first.data, c = init_state.second.data;
  std::vector<double> xh(D + H), gi(H), gf(H), go(H), gc(H);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(&seq.data[t * D], D, xh.begin());
    std::copy(h.begin(), h.end(), xh.begin() + D);
    matvec_into(p.w_i, xh.data(), gi.data());
    matvec_into(p.w_f, xh.data(), gf.data());
    matvec_into(p.w_o, xh.data(), go.data());
    matvec_into(p.w_c, xh.data(), gc.data());
    for (std::size_t k = 0; k < H; ++k) {
      const double i_g = 1.0 / (1.0 + std::exp(-(gi[k] + p.b_i.data[k])));
      const double f_g = 1.0 / (1.0 + std::exp(-(gf[k] + p.b_f.data[k])));
      const double o_g = 1.0 / (1.0 + std::exp(-(go[k] + p.b_o.data[k])));
      const double cand = std::tanh(gc[k] + p.b_c.data[k]);
      c[k] = f_g * c[k] + i_g * cand;
      h[k] = o_g * std::tanh(c[k]);
      out.data[t * H + k] = h[k];
    }
  }
  return out;
}

Tensor lstm_forward(const LstmParams& p, const Tensor& seq) {
  return lstm_forward(p, seq, {Tensor({p.hidden_dim}), Tensor({p.hidden_dim})});
}

Tensor conv2d_forward(const Conv2dParams& p, const Tensor& input) {
  std::size_t C, H, W;
  if (input.ndim() == 2) {
    C = 1;
    H = input.dim(0);
    W = input.dim(1);
  } else if (input.ndim() == 3) {
    C = input.dim(0);
    H = input.dim(1);
    W = input.dim(2);
  } else {
    throw std::invalid_argument("conv2d_forward: input must be (H,W) or (C,H,W)");
  }
  if (C != p.in_channels) throw std::invalid_argument("conv2d_forward: channel mismatch");
  if (H < 3 || W < 3) throw std::invalid_argument("conv2d_forward: input smaller than kernel");
  const std::size_t K = p.num_kernels, OH = H - 2, OW = W - 2;
  Tensor out({K, OH, OW});
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double s = p.biases.data[k];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < 3; ++dy)
            for (std::size_t dx = 0; dx < 3; ++dx)
              s += p.kernels.data[((k * C + c) * 3 + dy) * 3 + dx] *
                   input.data[(c * H + oy + dy) * W + ox + dx];
        out.data[(k * OH + oy) * OW + ox] = s;
      }
  return out;
}

Tensor fc_forward(const FcParams& p, const Tensor& input) {
  if (input.size() != p.in_dim) throw std::invalid_argument("fc_forward: dimension mismatch");
  Tensor out({p.out_dim});
  matvec_into(p.weights, input.data.data(), out.data.data());
  for (std::size_t i = 0; i < p.out_dim; ++i) out.data[i] += p.biases.data[i];
  return out;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) throw std::invalid_argument("mse_loss: shape mismatch");
  const std::size_t m = pred.size();
  if (m == 0) throw std::invalid_argument("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = pred.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(m);
}

double combined_loss(const Tensor& pred_p, const Tensor& target_p, const Tensor& pred_s,
                     const Tensor& target_s, double alpha, double beta) {
  return alpha * mse_loss(pred_p, target_p) + beta * mse_loss(pred_s, target_s);
}

// ---------------------------------------------------------------------------
// Tape layers

LstmVars bind(Tape& t, LstmParams& p) {
  check_lstm_shapes(p);
  return LstmVars{t.param(p.w_i), t.param(p.w_f), t.param(p.w_o), t.param(p.w_c),
                  t.param(p.b_i), t.param(p.b_f), t.param(p.b_o), t.param(p.b_c)};
}

Tape::Var lstm_forward(Tape& t, const LstmVars& p, Tape::Var seq) {
  const Tensor& s = t.value(seq);
  if (s.ndim() != 2) throw std::invalid_argument("lstm_forward: sequence must be 2-d");
  const std::size_t T = s.dim(0), H = t.value(p.b_i).size();
  Tape::Var h = t.input(Tensor({H}));
  Tape::Var c = t.input(Tensor({H}));
  std::vector<Tape::Var> hs;
  hs.reserve(T);
  for (std::size_t step = 0; step < T; ++step) {
    Tape::Var x = t.row(seq, step);
    std::array<Tape::Var, 2> xh{x, h};
    Tape::Var v = t.concat(xh);
    Tape::Var ig = t.sigmoid(t.add(t.matvec(p.w_i, v), p.b_i));
    Tape::Var fg = t.sigmoid(t.add(t.matvec(p.w_f, v), p.b_f));
    Tape::Var og = t.sigmoid(t.add(t.matvec(p.w_o, v), p.b_o));
    Tape::Var cand = t.tanh(t.add(t.matvec(p.w_c, v), p.b_c));
    c = t.add(t.mul(fg, c), t.mul(ig, cand));
    h = t.mul(og, t.tanh(c));
    hs.push_back(h);
  }
  return t.stack_rows(hs);
}

Tape::Var conv2d_forward(Tape& t, Tape::Var input, Tape::Var kernels, Tape::Var biases) {
  return t.conv2d(input, kernels, biases);
}

FcVars bind(Tape& t, FcParams& p) { return FcVars{t.param(p.weights), t.param(p.biases)}; }

Tape::Var fc_forward(Tape& t, const FcVars& p, Tape::Var input) {
  return t.add(t.matvec(p.weights, input), p.biases);
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(const std::vector<Tensor*>& params) {
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.push_back(Tensor(p->shape));
    v.push_back(Tensor(p->shape));
  }
  step_count = 0;
}

void adam_step(AdamState& st, const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads) {
  adam_step_decayed(st, params, grads, 0.0);
}

void adam_step_decayed(AdamState& st, const std::vector<Tensor*>& params,
                       const std::vector<const std::vector<double>*>& grads, double weight_decay) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  st.step_count += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const std::vector<double>& g = *grads[k];
    if (g.size() != p.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    Tensor &mk = st.m[k], &vk = st.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + weight_decay * p.data[i];
      mk.data[i] = b1 * mk.data[i] + (1.0 - b1) * gi;
      vk.data[i] = b2 * vk.data[i] + (1.0 - b2) * gi * gi;
      const double mhat = mk.data[i] / bc1;
      const double vhat = vk.data[i] / bc2;
      p.data[i] -= st.cfg.learning_rate * mhat / (std::sqrt(vhat) + st.cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Initialization

Tensor glorot_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in,
                      std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

LstmParams make_lstm(Rng& rng, std::size_t input_dim, std::size_t hidden_dim) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  const std::size_t in = input_dim + hidden_dim;
  for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c})
    *w = glorot_uniform(rng, {hidden_dim, in}, in, hidden_dim);
  for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) *b = Tensor({hidden_dim});
  return p;
}

Conv2dParams make_conv2d(Rng& rng, std::size_t in_rows, std::size_t in_cols,
                         std::size_t in_channels, std::size_t num_kernels) {
  Conv2dParams p;
  p.in_rows = in_rows;
  p.in_cols = in_cols;
  p.in_channels = in_channels;
  p.num_kernels = num_kernels;
  const std::size_t fan_in = in_channels * 9, fan_out = num_kernels * 9;
  if (in_channels == 1)
    p.kernels = glorot_uniform(rng, {num_kernels, 3, 3}, fan_in, fan_out);
  else
    p.kernels = glorot_uniform(rng, {num_kernels, in_channels, 3, 3}, fan_in, fan_out);
  p.biases = Tensor({num_kernels});
  return p;
}

FcParams make_fc(Rng& rng, std::size_t in_dim, std::size_t out_dim) {
  FcParams p;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.weights = glorot_uniform(rng, {out_dim, in_dim}, in_dim, out_dim);
  p.biases = Tensor({out_dim});
  return p;
}

FcParams make_fc_zero(std::size_t in_dim, std::size_t out_dim) {
  FcParams p;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.weights = Tensor({out_dim, in_dim});
  p.biases = Tensor({out_dim});
  return p;
}

}  // namespace tsf::nn
