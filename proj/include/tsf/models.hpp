#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/nn.hpp"

namespace tsf::models {

/// Order matches the blend feature columns (alpha..delta).
enum class Arch { MIMO = 0, MISO = 1, SIMO = 2, SISO = 3 };

constexpr int kNumArchs = 4;
const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

inline bool multi_input(Arch a) { return a == Arch::MIMO || a == Arch::MISO; }
inline bool multi_output(Arch a) { return a == Arch::MIMO || a == Arch::SIMO; }

struct TrainConfig {
  double alpha = 1.0;  // power-loss weight
  double beta = 0.9;   // speed-loss weight (multi-output models)
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// One trained first-stage network plus the normalization statistics it was
/// trained under. Single-input models consume the 7x15 matrix; multi-input
/// models consume the NWP 5x15 / speed 1x15 / power 1x15 channel views, each
/// with its own LSTM. Multi-output models carry a second linear head for
/// wind speed.
struct Stage1Model {
  Arch arch = Arch::SISO;

  nn::LstmParams lstm;        // single-input trunk
  nn::LstmParams lstm_nwp;    // multi-input trunk
  nn::LstmParams lstm_speed;
  nn::LstmParams lstm_power;
  nn::Conv2dParams conv1;
  nn::Conv2dParams conv2;
  nn::FcParams fc1, fc2, fc3;
  nn::FcParams head_power;
  nn::FcParams head_speed;

  data::NormStats norm;
  double capacity = 0.0;

  int epochs_run = 0;
  double best_val_rmse = 0.0;
  std::uint64_t seed = 0;

  std::vector<nn::Tensor*> parameters();
  std::vector<const nn::Tensor*> parameters() const;
};

/// Seeded deterministic construction; same seed yields identical bytes, and
/// single/multi-output siblings share the trunk draws.
Stage1Model build_model(Arch arch, std::uint64_t seed);

/// Normalized (power, speed) head outputs for one window.
struct HeadOutput {
  double power = 0.0;
  double speed = 0.0;
};
HeadOutput forward_window(const Stage1Model& m, const data::InputWindow& w);

struct Forecast {
  std::vector<double> power_mw;      // de-normalized, clipped to [0, capacity]
  std::vector<double> power_raw_mw;  // de-normalized, unclipped (diagnostics)
  std::vector<double> speed_ms;      // multi-output models only
};

/// De-normalized forecasts; requires windows built with the model's norm
/// stats (throws on mismatch).
Forecast predict(const Stage1Model& m, const data::WindowSet& ws);

/// Called after every epoch with the current (post-update) model.
using EpochCallback = std::function<void(int epoch, const Stage1Model&)>;

/// Minibatch Adam on the power loss (single-output) or the weighted
/// power+speed loss (multi-output), early-stopped on validation power RMSE;
/// returns the best-validation snapshot.
Stage1Model train_stage1(Stage1Model model, const data::WindowSet& train,
                         const data::WindowSet& val, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

/// Training loss (Eq-style normalized-scale MSE, weighted for multi-output)
/// of a model over a fixed set of windows.
double batch_loss(const Stage1Model& m, const data::WindowSet& ws, double alpha = 1.0,
                  double beta = 0.9);

/// Validation power RMSE in MW of the model on a window set.
double validation_rmse(const Stage1Model& m, const data::WindowSet& ws);

void save_model(const Stage1Model& m, const std::string& path);
Stage1Model load_model(const std::string& path);

}  // namespace tsf::models
