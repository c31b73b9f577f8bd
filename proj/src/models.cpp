#include "tsf/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tsf/container.hpp"
#include "tsf/util.hpp"

namespace tsf::models {

namespace {

constexpr std::size_t kHist = 15;
constexpr std::size_t kHidden = 64;
constexpr std::size_t kConv1Kernels = 4;
constexpr std::size_t kConv2Kernels = 8;
constexpr std::size_t kFc1 = 256, kFc2 = 64, kFc3 = 16;

std::size_t trunk_feature_dim(Arch a) {
  if (multi_input(a)) {
    // NWP trunk flattens to 8x1x60, plus one 64-d hidden state per history LSTM
    return kConv2Kernels * 1 * 60 + 2 * kHidden;
  }
  return kConv2Kernels * 3 * 60;
}

// Enumerates (name, tensor) pairs in the canonical parameter order shared by
// the optimizer, the snapshots, and the serialized container.
template <class M, class F>
void visit_params(M& m, F&& f) {
  auto lstm = [&](const std::string& p, auto& l) {
    f(p + ".w_i", l.w_i);
    f(p + ".w_f", l.w_f);
    f(p + ".w_o", l.w_o);
    f(p + ".w_c", l.w_c);
    f(p + ".b_i", l.b_i);
    f(p + ".b_f", l.b_f);
    f(p + ".b_o", l.b_o);
    f(p + ".b_c", l.b_c);
  };
  auto fc = [&](const std::string& p, auto& l) {
    f(p + ".w", l.weights);
    f(p + ".b", l.biases);
  };
  if (multi_input(m.arch)) {
    lstm("lstm_nwp", m.lstm_nwp);
  } else {
    lstm("lstm", m.lstm);
  }
  f("conv1.k", m.conv1.kernels);
  f("conv1.b", m.conv1.biases);
  f("conv2.k", m.conv2.kernels);
  f("conv2.b", m.conv2.biases);
  if (multi_input(m.arch)) {
    lstm("lstm_speed", m.lstm_speed);
    lstm("lstm_power", m.lstm_power);
  }
  fc("fc1", m.fc1);
  fc("fc2", m.fc2);
  fc("fc3", m.fc3);
  fc("head_power", m.head_power);
  if (multi_output(m.arch)) fc("head_speed", m.head_speed);
}

struct ModelVars {
  nn::LstmVars lstm, lstm_nwp, lstm_speed, lstm_power;
  nn::Tape::Var c1k, c1b, c2k, c2b;
  nn::FcVars fc1, fc2, fc3, head_power, head_speed;
};

ModelVars bind_model(nn::Tape& t, Stage1Model& m) {
  ModelVars v;
  if (multi_input(m.arch)) {
    v.lstm_nwp = nn::bind(t, m.lstm_nwp);
    v.lstm_speed = nn::bind(t, m.lstm_speed);
    v.lstm_power = nn::bind(t, m.lstm_power);
  } else {
    v.lstm = nn::bind(t, m.lstm);
  }
  v.c1k = t.param(m.conv1.kernels);
  v.c1b = t.param(m.conv1.biases);
  v.c2k = t.param(m.conv2.kernels);
  v.c2b = t.param(m.conv2.biases);
  v.fc1 = nn::bind(t, m.fc1);
  v.fc2 = nn::bind(t, m.fc2);
  v.fc3 = nn::bind(t, m.fc3);
  v.head_power = nn::bind(t, m.head_power);
  if (multi_output(m.arch)) v.head_speed = nn::bind(t, m.head_speed);
  return v;
}

// Gradient handles in the same order as Stage1Model::parameters().
std::vector<nn::Tape::Var> var_list(const Stage1Model& m, const ModelVars& v) {
  std::vector<nn::Tape::Var> out;
  auto lstm = [&](const nn::LstmVars& l) {
    for (auto x : {l.w_i, l.w_f, l.w_o, l.w_c, l.b_i, l.b_f, l.b_o, l.b_c}) out.push_back(x);
  };
  if (multi_input(m.arch)) {
    lstm(v.lstm_nwp);
  } else {
    lstm(v.lstm);
  }
  out.push_back(v.c1k);
  out.push_back(v.c1b);
  out.push_back(v.c2k);
  out.push_back(v.c2b);
  if (multi_input(m.arch)) {
    lstm(v.lstm_speed);
    lstm(v.lstm_power);
  }
  for (auto* f : {&v.fc1, &v.fc2, &v.fc3, &v.head_power}) {
    out.push_back(f->weights);
    out.push_back(f->biases);
  }
  if (multi_output(m.arch)) {
    out.push_back(v.head_speed.weights);
    out.push_back(v.head_speed.biases);
  }
  return out;
}

nn::Tensor nwp_block(const data::InputWindow& w) {
  return nn::Tensor({5, kHist},
                    {w.matrix.data.begin(), w.matrix.data.begin() + 5 * kHist});
}
nn::Tensor speed_block(const data::InputWindow& w) {
  return nn::Tensor({1, kHist},
                    {w.matrix.data.begin() + 5 * kHist, w.matrix.data.begin() + 6 * kHist});
}
nn::Tensor power_block(const data::InputWindow& w) {
  return nn::Tensor({1, kHist},
                    {w.matrix.data.begin() + 6 * kHist, w.matrix.data.begin() + 7 * kHist});
}

// Tape forward for one window; returns (power, speed) head vars (1-element).
std::pair<nn::Tape::Var, nn::Tape::Var> forward_tape(nn::Tape& t, const Stage1Model& m,
                                                     const ModelVars& v,
                                                     const data::InputWindow& w) {
  nn::Tape::Var feat;
  if (multi_input(m.arch)) {
    auto hn = nn::lstm_forward(t, v.lstm_nwp, t.input(nwp_block(w)));
    auto c1 = t.elu(t.conv2d(hn, v.c1k, v.c1b));
    auto c2 = t.elu(t.conv2d(c1, v.c2k, v.c2b));
    auto hs = nn::lstm_forward(t, v.lstm_speed, t.input(speed_block(w)));
    auto hp = nn::lstm_forward(t, v.lstm_power, t.input(power_block(w)));
    std::array<nn::Tape::Var, 3> parts{t.flatten(c2), t.flatten(hs), t.flatten(hp)};
    feat = t.concat(parts);
  } else {
    auto h = nn::lstm_forward(t, v.lstm, t.input(w.matrix));
    auto c1 = t.elu(t.conv2d(h, v.c1k, v.c1b));
    auto c2 = t.elu(t.conv2d(c1, v.c2k, v.c2b));
    feat = t.flatten(c2);
  }
  auto z = t.elu(nn::fc_forward(t, v.fc1, feat));
  z = t.elu(nn::fc_forward(t, v.fc2, z));
  z = t.elu(nn::fc_forward(t, v.fc3, z));
  auto p = nn::fc_forward(t, v.head_power, z);
  nn::Tape::Var s{};
  if (multi_output(m.arch)) s = nn::fc_forward(t, v.head_speed, z);
  return {p, s};
}

}  // namespace

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::MIMO: return "mimo";
    case Arch::MISO: return "miso";
    case Arch::SIMO: return "simo";
    case Arch::SISO: return "siso";
  }
  throw std::invalid_argument("arch_name: bad tag");
}

Arch arch_from_name(const std::string& name) {
  if (name == "mimo") return Arch::MIMO;
  if (name == "miso") return Arch::MISO;
  if (name == "simo") return Arch::SIMO;
  if (name == "siso") return Arch::SISO;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

std::vector<nn::Tensor*> Stage1Model::parameters() {
  std::vector<nn::Tensor*> out;
  visit_params(*this, [&](const std::string&, nn::Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const nn::Tensor*> Stage1Model::parameters() const {
  std::vector<const nn::Tensor*> out;
  visit_params(*this, [&](const std::string&, const nn::Tensor& t) { out.push_back(&t); });
  return out;
}

Stage1Model build_model(Arch arch, std::uint64_t seed) {
  Stage1Model m;
  m.arch = arch;
  m.seed = seed;
  nn::Rng rng(seed);
  if (multi_input(arch)) {
    m.lstm_nwp = nn::make_lstm(rng, kHist, kHidden);
    m.conv1 = nn::make_conv2d(rng, 5, kHidden, 1, kConv1Kernels);
    m.conv2 = nn::make_conv2d(rng, 3, kHidden - 2, kConv1Kernels, kConv2Kernels);
    m.lstm_speed = nn::make_lstm(rng, kHist, kHidden);
    m.lstm_power = nn::make_lstm(rng, kHist, kHidden);
  } else {
    m.lstm = nn::make_lstm(rng, kHist, kHidden);
    m.conv1 = nn::make_conv2d(rng, 7, kHidden, 1, kConv1Kernels);
    m.conv2 = nn::make_conv2d(rng, 5, kHidden - 2, kConv1Kernels, kConv2Kernels);
  }
  m.fc1 = nn::make_fc(rng, trunk_feature_dim(arch), kFc1);
  m.fc2 = nn::make_fc(rng, kFc1, kFc2);
  m.fc3 = nn::make_fc(rng, kFc2, kFc3);
  m.head_power = nn::make_fc(rng, kFc3, 1);
  if (multi_output(arch)) m.head_speed = nn::make_fc(rng, kFc3, 1);
  return m;
}

HeadOutput forward_window(const Stage1Model& m, const data::InputWindow& w) {
  nn::Tensor feat;
  if (multi_input(m.arch)) {
    nn::Tensor hn = nn::lstm_forward(m.lstm_nwp, nwp_block(w));
    nn::Tensor c1 = nn::elu(nn::conv2d_forward(m.conv1, hn));
    nn::Tensor c2 = nn::elu(nn::conv2d_forward(m.conv2, c1));
    nn::Tensor hs = nn::lstm_forward(m.lstm_speed, speed_block(w));
    nn::Tensor hp = nn::lstm_forward(m.lstm_power, power_block(w));
    feat = nn::Tensor({c2.size() + hs.size() + hp.size()});
    auto it = std::copy(c2.data.begin(), c2.data.end(), feat.data.begin());
    it = std::copy(hs.data.begin(), hs.data.end(), it);
    std::copy(hp.data.begin(), hp.data.end(), it);
  } else {
    nn::Tensor h = nn::lstm_forward(m.lstm, w.matrix);
    nn::Tensor c1 = nn::elu(nn::conv2d_forward(m.conv1, h));
    nn::Tensor c2 = nn::elu(nn::conv2d_forward(m.conv2, c1));
    feat = nn::Tensor({c2.size()}, c2.data);
  }
  nn::Tensor z = nn::elu(nn::fc_forward(m.fc1, feat));
  z = nn::elu(nn::fc_forward(m.fc2, z));
  z = nn::elu(nn::fc_forward(m.fc3, z));
  HeadOutput out;
  out.power = nn::fc_forward(m.head_power, z).data[0];
  if (multi_output(m.arch)) out.speed = nn::fc_forward(m.head_speed, z).data[0];
  return out;
}

Forecast predict(const Stage1Model& m, const data::WindowSet& ws) {
  if (!(ws.stats == m.norm))
    throw std::invalid_argument("predict: windows were built with different normalization stats");
  Forecast f;
  f.power_mw.reserve(ws.windows.size());
  f.power_raw_mw.reserve(ws.windows.size());
  for (const auto& w : ws.windows) {
    const HeadOutput h = forward_window(m, w);
    const double raw = data::denorm_value(m.norm, data::kPower, h.power);
    f.power_raw_mw.push_back(raw);
    f.power_mw.push_back(std::clamp(raw, 0.0, m.capacity));
    if (multi_output(m.arch))
      f.speed_ms.push_back(data::denorm_value(m.norm, data::kSpeed, h.speed));
  }
  return f;
}

double validation_rmse(const Stage1Model& m, const data::WindowSet& ws) {
  const Forecast f = predict(m, ws);
  double se = 0.0;
  for (std::size_t i = 0; i < ws.windows.size(); ++i) {
    const double truth = data::denorm_value(m.norm, data::kPower, ws.windows[i].target_power);
    const double d = f.power_mw[i] - truth;
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(ws.windows.size()));
}

double batch_loss(const Stage1Model& m, const data::WindowSet& ws, double alpha, double beta) {
  if (ws.windows.empty()) throw std::invalid_argument("batch_loss: empty window set");
  nn::Tensor pp({ws.windows.size()}), tp({ws.windows.size()});
  nn::Tensor ps({ws.windows.size()}), ts({ws.windows.size()});
  for (std::size_t i = 0; i < ws.windows.size(); ++i) {
    const HeadOutput h = forward_window(m, ws.windows[i]);
    pp.data[i] = h.power;
    tp.data[i] = ws.windows[i].target_power;
    ps.data[i] = h.speed;
    ts.data[i] = ws.windows[i].target_speed;
  }
  if (multi_output(m.arch)) return nn::combined_loss(pp, tp, ps, ts, alpha, beta);
  return nn::mse_loss(pp, tp);
}

Stage1Model train_stage1(Stage1Model model, const data::WindowSet& train,
                         const data::WindowSet& val, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  if (train.windows.empty() || val.windows.empty())
    throw std::invalid_argument("train_stage1: empty window set");
  model.norm = train.stats;
  model.capacity = train.capacity;

  std::vector<nn::Tensor*> params = model.parameters();
  nn::AdamState adam(nn::AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  adam.init(params);

  std::vector<std::size_t> order(train.windows.size());
  std::iota(order.begin(), order.end(), 0);

  double best = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> snapshot;
  int stale = 0, epochs = 0;
  const bool multi = multi_output(model.arch);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xE50C, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      nn::Tape t;
      ModelVars mv = bind_model(t, model);
      std::vector<nn::Tape::Var> preds_p, preds_s;
      nn::Tensor tgt_p({stop - start}), tgt_s({stop - start});
      for (std::size_t k = start; k < stop; ++k) {
        const auto& w = train.windows[order[k]];
        auto [pv, sv] = forward_tape(t, model, mv, w);
        preds_p.push_back(pv);
        if (multi) preds_s.push_back(sv);
        tgt_p.data[k - start] = w.target_power;
        tgt_s.data[k - start] = w.target_speed;
      }
      nn::Tape::Var loss = t.mse(t.concat(preds_p), t.input(tgt_p));
      if (multi)
        loss = t.add_scaled(cfg.alpha, loss, cfg.beta, t.mse(t.concat(preds_s), t.input(tgt_s)));
      t.backward(loss);
      std::vector<nn::Tape::Var> vars = var_list(model, mv);
      std::vector<const std::vector<double>*> grads;
      grads.reserve(vars.size());
      for (auto v : vars) grads.push_back(&t.grad(v));
      nn::adam_step(adam, params, grads);
    }
    ++epochs;
    if (on_epoch) on_epoch(epochs, model);
    const double vr = validation_rmse(model, val);
    if (vr < best) {
      best = vr;
      snapshot.clear();
      for (auto* p : params) snapshot.push_back(*p);
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;
    }
  }
  if (!snapshot.empty())
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snapshot[i];
  model.epochs_run = epochs;
  model.best_val_rmse = best;
  return model;
}

void save_model(const Stage1Model& m, const std::string& path) {
  io::Container c;
  c.put_string("kind", "stage1");
  c.put_string("arch", arch_name(m.arch));
  c.put_string("seed", std::to_string(m.seed));
  c.put_scalar("capacity", m.capacity);
  c.put_scalar("epochs_run", m.epochs_run);
  c.put_scalar("best_val_rmse", m.best_val_rmse);
  nn::Tensor mn({data::kNumChannels}), mx({data::kNumChannels}), cst({data::kNumChannels});
  for (int i = 0; i < data::kNumChannels; ++i) {
    mn.data[i] = m.norm.min[i];
    mx.data[i] = m.norm.max[i];
    cst.data[i] = m.norm.constant[i] ? 1.0 : 0.0;
  }
  c.put_tensor("norm.min", mn);
  c.put_tensor("norm.max", mx);
  c.put_tensor("norm.constant", cst);
  visit_params(m, [&](const std::string& name, const nn::Tensor& t) { c.put_tensor(name, t); });
  c.save(path);
}

Stage1Model load_model(const std::string& path) {
  io::Container c = io::Container::load(path);
  if (c.str("kind") != "stage1") throw std::runtime_error("load_model: not a stage-1 model file");
  Stage1Model m = build_model(arch_from_name(c.str("arch")), std::stoull(c.str("seed")));
  m.capacity = c.scalar("capacity");
  m.epochs_run = static_cast<int>(c.scalar("epochs_run"));
  m.best_val_rmse = c.scalar("best_val_rmse");
  const nn::Tensor &mn = c.tensor("norm.min"), &mx = c.tensor("norm.max"),
                   &cst = c.tensor("norm.constant");
  for (int i = 0; i < data::kNumChannels; ++i) {
    m.norm.min[i] = mn.data[i];
    m.norm.max[i] = mx.data[i];
    m.norm.constant[i] = cst.data[i] != 0.0;
  }
  visit_params(m, [&](const std::string& name, nn::Tensor& t) {
    const nn::Tensor& src = c.tensor(name);
    if (src.shape != t.shape) throw std::runtime_error("load_model: shape mismatch for " + name);
    t = src;
  });
  return m;
}

}  // namespace tsf::models
