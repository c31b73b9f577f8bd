#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "tsf/autodiff.hpp"
#include "tsf/tensor.hpp"

namespace tsf::nn {

// ---------------------------------------------------------------------------
// Layer parameter blocks

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  // gate weights are (hidden, input+hidden), biases (hidden)
  Tensor w_i, w_f, w_o, w_c;
  Tensor b_i, b_f, b_o, b_c;
};

struct Conv2dParams {
  std::size_t in_rows = 0, in_cols = 0;
  std::size_t in_channels = 1;
  std::size_t num_kernels = 0;
  // kernel size (3,3), stride (1,1); kernels (K,3,3) for one input channel,
  // (K,C,3,3) otherwise
  Tensor kernels;
  Tensor biases;
};

struct FcParams {
  std::size_t in_dim = 0, out_dim = 0;
  Tensor weights;  // (out, in)
  Tensor biases;   // (out)
};

// ---------------------------------------------------------------------------
// Pure forward passes (no gradient tracking). The tape ops below reuse the
// same arithmetic, so both paths agree bitwise.

Tensor elu(const Tensor& x);
Tensor relu(const Tensor& x);

/// Runs the standard four-gate LSTM over seq (T, input_dim) from the given
/// initial (hidden, cell) state and returns all T hidden states (T, hidden).
Tensor lstm_forward(const LstmParams& p, const Tensor& seq,
                    const std::pair<Tensor, Tensor>& init_state);
Tensor lstm_forward(const LstmParams& p, const Tensor& seq);  // zero init state

/// Valid cross-correlation, stride (1,1), one bias per kernel. Input (H,W)
/// or (C,H,W); output (num_kernels, H-2, W-2).
Tensor conv2d_forward(const Conv2dParams& p, const Tensor& input);

Tensor fc_forward(const FcParams& p, const Tensor& input);

double mse_loss(const Tensor& pred, const Tensor& target);

/// alpha * mse(power) + beta * mse(speed)
double combined_loss(const Tensor& pred_p, const Tensor& target_p, const Tensor& pred_s,
                     const Tensor& target_s, double alpha, double beta);

// ---------------------------------------------------------------------------
// Tape-recorded layer forwards for training

struct LstmVars {
  Tape::Var w_i, w_f, w_o, w_c, b_i, b_f, b_o, b_c;
};

LstmVars bind(Tape& t, LstmParams& p);

/// seq may be a constant input pushed with tape.input(); returns (T, hidden).
Tape::Var lstm_forward(Tape& t, const LstmVars& p, Tape::Var seq);

Tape::Var conv2d_forward(Tape& t, Tape::Var input, Tape::Var kernels, Tape::Var biases);

struct FcVars {
  Tape::Var weights, biases;
};

FcVars bind(Tape& t, FcParams& p);
Tape::Var fc_forward(Tape& t, const FcVars& p, Tape::Var input);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step_count = 0;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}
  void init(const std::vector<Tensor*>& params);
};

/// Standard bias-corrected Adam update. grads[i] must match params[i] in size.
void adam_step(AdamState& st, const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads);

/// Convenience: L2 weight decay folded into the gradient (grad + wd * param).
void adam_step_decayed(AdamState& st, const std::vector<Tensor*>& params,
                       const std::vector<const std::vector<double>*>& grads, double weight_decay);

// ---------------------------------------------------------------------------
// Initialization

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen);
  }
  double gaussian(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(gen);
  }
};

/// Uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in,
                      std::size_t fan_out);

LstmParams make_lstm(Rng& rng, std::size_t input_dim, std::size_t hidden_dim);
Conv2dParams make_conv2d(Rng& rng, std::size_t in_rows, std::size_t in_cols,
                         std::size_t in_channels, std::size_t num_kernels);
FcParams make_fc(Rng& rng, std::size_t in_dim, std::size_t out_dim);
FcParams make_fc_zero(std::size_t in_dim, std::size_t out_dim);

}  // namespace tsf::nn
