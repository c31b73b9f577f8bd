#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tsf/autodiff.hpp"
#include "tsf/nn.hpp"

using namespace tsf::nn;

namespace {

Tensor random_tensor(std::mt19937_64& g, std::vector<std::size_t> shape, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = d(g);
  return t;
}

// Central finite differences against the analytic gradients already stored in
// `analytic`, perturbing each coordinate of each tensor in `params` and
// re-running the pure forward `loss_fn`. Independent of the tape internals.
template <class LossFn>
double max_grad_rel_err(const std::vector<Tensor*>& params,
                        const std::vector<std::vector<double>>& analytic, LossFn loss_fn) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + h;
      const double fp = loss_fn();
      p.data[i] = orig - h;
      const double fm = loss_fn();
      p.data[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elu values") {
  Tensor x = Tensor::vec({0.0, 1.0, -1.0});
  Tensor y = elu(x);
  CHECK(y.data[0] == 0.0);
  CHECK(y.data[1] == 1.0);
  CHECK(y.data[2] == doctest::Approx(-0.6321205588285577).epsilon(1e-9));
  CHECK(y.shape == x.shape);
}

TEST_CASE("fc_forward examples") {
  FcParams id;
  id.in_dim = id.out_dim = 3;
  id.weights = Tensor::mat(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  id.biases = Tensor({3});
  Tensor x = Tensor::vec({0.3, -2.0, 5.5});
  CHECK(fc_forward(id, x).data == x.data);

  FcParams zero;
  zero.in_dim = 3;
  zero.out_dim = 2;
  zero.weights = Tensor({2, 3});
  zero.biases = Tensor::vec({4.0, -1.0});
  CHECK(fc_forward(zero, x).data == std::vector<double>{4.0, -1.0});

  FcParams p;
  p.in_dim = 2;
  p.out_dim = 1;
  p.weights = Tensor::mat(1, 2, {1, 2});
  p.biases = Tensor::vec({0.5});
  CHECK(fc_forward(p, Tensor::vec({3, 4})).data[0] == doctest::Approx(11.5).epsilon(1e-15));

  CHECK_THROWS_AS(fc_forward(p, x), std::invalid_argument);
}

TEST_CASE("conv2d_forward examples") {
  Conv2dParams p;
  p.in_rows = 3;
  p.in_cols = 3;
  p.in_channels = 1;
  p.num_kernels = 1;
  p.kernels = Tensor({1, 3, 3}, std::vector<double>(9, 1.0));
  p.biases = Tensor({1});

  SUBCASE("zero input, zero bias -> zero output") {
    Tensor x({3, 3});
    Tensor y = conv2d_forward(p, x);
    CHECK(y.shape == std::vector<std::size_t>{1, 1, 1});
    CHECK(y.data[0] == 0.0);
  }
  SUBCASE("ones x ones kernel sums to 9") {
    Tensor x({3, 3}, std::vector<double>(9, 1.0));
    CHECK(conv2d_forward(p, x).data[0] == doctest::Approx(9.0).epsilon(1e-15));
  }
  SUBCASE("delta kernel reproduces the interior") {
    Conv2dParams d = p;
    d.in_rows = 5;
    d.in_cols = 6;
    d.kernels = Tensor({1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    std::mt19937_64 g(7);
    Tensor x = random_tensor(g, {5, 6});
    Tensor y = conv2d_forward(d, x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 3, 4});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(0, i, j) == x.at(i + 1, j + 1));
  }
  SUBCASE("input smaller than kernel") {
    Tensor small({2, 3});
    CHECK_THROWS_AS(conv2d_forward(p, small), std::invalid_argument);
  }
}

TEST_CASE("losses") {
  Tensor a = Tensor::vec({1, 2, 3});
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(Tensor::vec({2}), Tensor::vec({0})) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(mse_loss(Tensor::vec({1, 3}), Tensor::vec({0, 0})) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(mse_loss(Tensor{}, Tensor{}), std::invalid_argument);

  // combined loss: alpha * power mse + beta * speed mse
  Tensor z1 = Tensor::vec({0});
  Tensor o1 = Tensor::vec({1});
  CHECK(combined_loss(a, a, a, a, 1.0, 0.9) == 0.0);
  CHECK(combined_loss(o1, z1, o1, z1, 1.0, 0.9) == doctest::Approx(1.9).epsilon(1e-15));
  std::mt19937_64 g(3);
  Tensor pp = random_tensor(g, {5}), tp = random_tensor(g, {5});
  Tensor ps = random_tensor(g, {5}), ts = random_tensor(g, {5});
  CHECK(combined_loss(pp, tp, ps, ts, 1.0, 0.0) == mse_loss(pp, tp));
}

TEST_CASE("lstm_forward: zero weights give zero hidden states") {
  LstmParams p;
  p.input_dim = 3;
  p.hidden_dim = 4;
  for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) *w = Tensor({4, 7});
  for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) *b = Tensor({4});
  std::mt19937_64 g(11);
  Tensor seq = random_tensor(g, {5, 3});
  Tensor h = lstm_forward(p, seq);
  REQUIRE(h.shape == std::vector<std::size_t>{5, 4});
  for (double v : h.data) CHECK(v == 0.0);
}

TEST_CASE("lstm_forward: empty sequence") {
  std::mt19937_64 g(1);
  Rng rng(1);
  LstmParams p = make_lstm(rng, 3, 4);
  Tensor h = lstm_forward(p, Tensor({0, 3}));
  CHECK(h.shape == std::vector<std::size_t>{0, 4});
  CHECK(h.data.empty());
  CHECK_THROWS_AS(lstm_forward(p, Tensor({2, 5})), std::invalid_argument);
}

TEST_CASE("lstm_forward single step matches a scalar gate-equation oracle") {
  Rng rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    LstmParams p = make_lstm(rng, 2, 3);
    for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c})
      for (auto& v : b->data) v = rng.uniform(-0.5, 0.5);
    std::mt19937_64 g(100 + rep);
    Tensor seq = random_tensor(g, {1, 2});
    Tensor h0 = random_tensor(g, {3});
    Tensor c0 = random_tensor(g, {3});
    Tensor h = lstm_forward(p, seq, {h0, c0});

    // scalar re-evaluation of the gate equations, one coordinate at a time
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    for (std::size_t k = 0; k < 3; ++k) {
      double zi = p.b_i.data[k], zf = p.b_f.data[k], zo = p.b_o.data[k], zc = p.b_c.data[k];
      for (std::size_t j = 0; j < 5; ++j) {
        const double vj = j < 2 ? seq.data[j] : h0.data[j - 2];
        zi += p.w_i.at(k, j) * vj;
        zf += p.w_f.at(k, j) * vj;
        zo += p.w_o.at(k, j) * vj;
        zc += p.w_c.at(k, j) * vj;
      }
      const double c1 = sig(zf) * c0.data[k] + sig(zi) * std::tanh(zc);
      const double h1 = sig(zo) * std::tanh(c1);
      CHECK(h.at(0, k) == doctest::Approx(h1).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward: square function") {
  Tensor w = Tensor::vec({3.0});
  Tape t;
  auto wv = t.param(w);
  auto loss = t.mse(t.mul(wv, wv), t.input(Tensor::vec({0.0})));  // (w^2 - 0)^2? no: mse gives (w*w)^2
  // use f = w * w directly as the scalar loss
  Tape t2;
  auto wv2 = t2.param(w);
  auto f = t2.mul(wv2, wv2);
  t2.backward(f);
  CHECK(t2.grad(wv2)[0] == doctest::Approx(6.0).epsilon(1e-12));
  (void)loss;
  (void)wv;
}

TEST_CASE("backward before forward is an error") {
  Tape t;
  Tensor w = Tensor::vec({1.0});
  auto v = t.param(w);
  CHECK_THROWS_AS(t.grad(v), std::logic_error);
}

TEST_CASE("zero loss on constant-zero network leaves all gradients zero") {
  Tensor w({2, 3});
  Tensor b({2});
  Tape t;
  FcParams fp;
  fp.in_dim = 3;
  fp.out_dim = 2;
  fp.weights = w;
  fp.biases = b;
  auto vars = bind(t, fp);
  auto out = fc_forward(t, vars, t.input(Tensor::vec({0.5, -1.0, 2.0})));
  auto loss = t.mse(out, t.input(Tensor({2})));
  t.backward(loss);
  for (double gv : t.grad(vars.weights)) CHECK(gv == 0.0);
  for (double gv : t.grad(vars.biases)) CHECK(gv == 0.0);
}

TEST_CASE("gradient check: elu") {
  std::mt19937_64 g(21);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = random_tensor(g, {6}, -2.0, 2.0);
    Tensor tgt = random_tensor(g, {6});
    Tape t;
    auto xv = t.param(x);
    auto loss = t.mse(t.elu(xv), t.input(tgt));
    t.backward(loss);
    std::vector<std::vector<double>> analytic{t.grad(xv)};
    worst = std::max(worst, max_grad_rel_err({&x}, analytic,
                                             [&] { return mse_loss(elu(x), tgt); }));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient check: fc") {
  std::mt19937_64 g(22);
  Rng rng(22);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    FcParams p = make_fc(rng, 4, 3);
    Tensor x = random_tensor(g, {4});
    Tensor tgt = random_tensor(g, {3});
    Tape t;
    auto vars = bind(t, p);
    auto xv = t.param(x);
    auto loss = t.mse(t.elu(fc_forward(t, vars, xv)), t.input(tgt));
    t.backward(loss);
    std::vector<std::vector<double>> analytic{t.grad(vars.weights), t.grad(vars.biases),
                                              t.grad(xv)};
    auto f = [&] { return mse_loss(elu(fc_forward(p, x)), tgt); };
    worst = std::max(worst, max_grad_rel_err({&p.weights, &p.biases, &x}, analytic, f));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient check: conv2d single and multi channel") {
  std::mt19937_64 g(23);
  Rng rng(23);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t C = rep % 2 == 0 ? 1 : 2;
    Conv2dParams p = make_conv2d(rng, 4, 5, C, 2);
    Tensor x = C == 1 ? random_tensor(g, {4, 5}) : random_tensor(g, {C, 4, 5});
    Tensor tgt = random_tensor(g, {2 * 2 * 3});
    Tape t;
    auto kv = t.param(p.kernels);
    auto bv = t.param(p.biases);
    auto xv = t.param(x);
    auto loss = t.mse(t.flatten(t.conv2d(xv, kv, bv)), t.input(tgt));
    t.backward(loss);
    std::vector<std::vector<double>> analytic{t.grad(kv), t.grad(bv), t.grad(xv)};
    auto f = [&] {
      Tensor y = conv2d_forward(p, x);
      return mse_loss(Tensor({y.size()}, y.data), tgt);
    };
    worst = std::max(worst, max_grad_rel_err({&p.kernels, &p.biases, &x}, analytic, f));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient check: lstm") {
  std::mt19937_64 g(24);
  Rng rng(24);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    LstmParams p = make_lstm(rng, 3, 4);
    Tensor seq = random_tensor(g, {3, 3});
    Tensor tgt = random_tensor(g, {3 * 4});
    Tape t;
    auto vars = bind(t, p);
    auto sv = t.param(seq);
    auto h = lstm_forward(t, vars, sv);
    auto loss = t.mse(t.flatten(h), t.input(tgt));
    t.backward(loss);
    std::vector<Tensor*> params{&p.w_i, &p.w_f, &p.w_o, &p.w_c,
                                &p.b_i, &p.b_f, &p.b_o, &p.b_c, &seq};
    std::vector<std::vector<double>> analytic{
        t.grad(vars.w_i), t.grad(vars.w_f), t.grad(vars.w_o), t.grad(vars.w_c),
        t.grad(vars.b_i), t.grad(vars.b_f), t.grad(vars.b_o), t.grad(vars.b_c), t.grad(sv)};
    auto f = [&] {
      Tensor h2 = lstm_forward(p, seq);
      return mse_loss(Tensor({h2.size()}, h2.data), tgt);
    };
    worst = std::max(worst, max_grad_rel_err(params, analytic, f));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient check: combined loss") {
  std::mt19937_64 g(25);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Tensor pp = random_tensor(g, {4}), tp = random_tensor(g, {4});
    Tensor ps = random_tensor(g, {4}), ts = random_tensor(g, {4});
    Tape t;
    auto ppv = t.param(pp), psv = t.param(ps);
    auto loss = t.add_scaled(1.0, t.mse(ppv, t.input(tp)), 0.9, t.mse(psv, t.input(ts)));
    t.backward(loss);
    std::vector<std::vector<double>> analytic{t.grad(ppv), t.grad(psv)};
    auto f = [&] { return combined_loss(pp, tp, ps, ts, 1.0, 0.9); };
    worst = std::max(worst, max_grad_rel_err({&pp, &ps}, analytic, f));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("tape and pure forwards agree bitwise") {
  Rng rng(77);
  LstmParams p = make_lstm(rng, 5, 6);
  std::mt19937_64 g(77);
  Tensor seq = random_tensor(g, {4, 5});
  Tape t;
  auto vars = bind(t, p);
  auto h = lstm_forward(t, vars, t.input(seq));
  Tensor pure = lstm_forward(p, seq);
  CHECK(t.value(h).data == pure.data);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor w = Tensor::vec({1.0, -2.0});
  AdamState st;
  st.init({&w});
  std::vector<double> zg(2, 0.0);
  adam_step(st, {&w}, {&zg});
  CHECK(w.data == std::vector<double>{1.0, -2.0});
  CHECK(st.step_count == 1);
}

TEST_CASE("adam: first step moves by about the learning rate") {
  Tensor w = Tensor::vec({0.5});
  AdamState st;
  st.init({&w});
  std::vector<double> grd{1.0};
  adam_step(st, {&w}, {&grd});
  // bias-corrected mhat = vhat = 1, update = lr / (1 + eps)
  CHECK(w.data[0] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam: identical calls from identical states are bit-identical") {
  auto run = [] {
    Tensor w = Tensor::vec({0.3, 0.7, -0.1});
    AdamState st;
    st.init({&w});
    std::vector<double> grd{0.2, -0.5, 1.5};
    for (int i = 0; i < 10; ++i) adam_step(st, {&w}, {&grd});
    return w.data;
  };
  CHECK(run() == run());
  Tensor w = Tensor::vec({0.0});
  AdamState st;
  st.init({&w});
  std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS(adam_step(st, {&w}, {&bad}), std::invalid_argument);
}

TEST_CASE("shape algebra: the 7x15 single-input stack composes") {
  Rng rng(5);
  LstmParams lstm = make_lstm(rng, 15, 64);
  Tensor x({7, 15});
  Tensor h = lstm_forward(lstm, x);
  REQUIRE(h.shape == std::vector<std::size_t>{7, 64});
  Conv2dParams c1 = make_conv2d(rng, 7, 64, 1, 4);
  Tensor m1 = conv2d_forward(c1, h);
  REQUIRE(m1.shape == std::vector<std::size_t>{4, 5, 62});
  Conv2dParams c2 = make_conv2d(rng, 5, 62, 4, 8);
  Tensor m2 = conv2d_forward(c2, elu(m1));
  REQUIRE(m2.shape == std::vector<std::size_t>{8, 3, 60});
  FcParams f1 = make_fc(rng, 8 * 3 * 60, 256);
  Tensor v1 = fc_forward(f1, Tensor({m2.size()}, m2.data));
  REQUIRE(v1.shape == std::vector<std::size_t>{256});
}

TEST_CASE("linearity of conv2d and fc with zero biases") {
  Rng rng(9);
  std::mt19937_64 g(9);
  Conv2dParams c = make_conv2d(rng, 5, 5, 1, 3);
  c.biases = Tensor({3});
  FcParams f = make_fc(rng, 6, 4);
  f.biases = Tensor({4});
  for (int rep = 0; rep < 10; ++rep) {
    Tensor a = random_tensor(g, {5, 5}), b = random_tensor(g, {5, 5});
    Tensor ab = a;
    for (std::size_t i = 0; i < ab.size(); ++i) ab.data[i] += b.data[i];
    Tensor ya = conv2d_forward(c, a), yb = conv2d_forward(c, b), yab = conv2d_forward(c, ab);
    for (std::size_t i = 0; i < yab.size(); ++i)
      CHECK(yab.data[i] == doctest::Approx(ya.data[i] + yb.data[i]).epsilon(1e-12));
    Tensor s = a;
    for (auto& v : s.data) v *= 2.0;
    Tensor ys = conv2d_forward(c, s);
    for (std::size_t i = 0; i < ys.size(); ++i)
      CHECK(ys.data[i] == doctest::Approx(2.0 * ya.data[i]).epsilon(1e-12));

    Tensor u = random_tensor(g, {6}), w = random_tensor(g, {6});
    Tensor uw = u;
    for (std::size_t i = 0; i < 6; ++i) uw.data[i] += w.data[i];
    Tensor fu = fc_forward(f, u), fw = fc_forward(f, w), fuw = fc_forward(f, uw);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(fuw.data[i] == doctest::Approx(fu.data[i] + fw.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("determinism: identical seeds give bit-identical training step") {
  auto run = [] {
    Rng rng(123);
    FcParams p = make_fc(rng, 3, 1);
    AdamState st;
    st.init({&p.weights, &p.biases});
    std::mt19937_64 g(5);
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor(g, {3});
      Tensor tgt = random_tensor(g, {1});
      Tape t;
      auto vars = bind(t, p);
      auto loss = t.mse(fc_forward(t, vars, t.input(x)), t.input(tgt));
      t.backward(loss);
      adam_step(st, {&p.weights, &p.biases}, {&t.grad(vars.weights), &t.grad(vars.biases)});
    }
    return p.weights.data;
  };
  CHECK(run() == run());
}
