#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "binpick/adam.hpp"
#include "binpick/gradcheck.hpp"
#include "binpick/layers.hpp"

using namespace binpick;

namespace {

template <class S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0,
                        double hi = 2.0) {
  Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

// Keeps FD probes away from relu/maxpool kinks.
template <class S>
Tensor<S> kink_free_tensor(std::vector<int> shape, Rng& rng, double margin) {
  Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    double v = rng.uniform(-2.0, 2.0);
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    t[i] = static_cast<S>(v);
  }
  return t;
}

// Independent scalar ADAM, double precision throughout.
struct ScalarAdamOracle {
  double m = 0, v = 0;
  int t = 0;
  double step(double value, double grad, double lr) {
    t += 1;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    return value - lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
};

}  // namespace

TEST_CASE("relu forward and backward") {
  Layer<float> relu = Relu{};
  Tensor<float> in({3}, {-1.f, 0.f, 2.f});
  Tensor<float> out = layer_forward(relu, in);
  CHECK(out[0] == 0.f);
  CHECK(out[1] == 0.f);
  CHECK(out[2] == 2.f);

  Tensor<float> in2({2}, {-1.f, 2.f});
  Tensor<float> up({2}, {5.f, 5.f});
  Tensor<float> din = layer_backward(relu, in2, up);
  CHECK(din[0] == 0.f);
  CHECK(din[1] == 5.f);
}

TEST_CASE("softmax uniform on zero logits, sums to one") {
  Layer<float> sm = Softmax{};
  Tensor<float> in({4}, {0.f, 0.f, 0.f, 0.f});
  Tensor<float> out = layer_forward(sm, in);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.25));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<float> x = random_tensor<float>({5, 9}, rng, -4.0, 4.0);
    Tensor<float> y = layer_forward(sm, x);
    for (int r = 0; r < 5; ++r) {
      double sum = 0;
      for (int k = 0; k < 9; ++k) {
        CHECK(y[r * 9 + k] >= 0.f);
        sum += y[r * 9 + k];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("maxpool of constant plane is constant") {
  Layer<float> mp = MaxPool2x2{};
  Tensor<float> in = Tensor<float>::full({1, 4, 4}, 3.0f);
  Tensor<float> out = layer_forward(mp, in);
  CHECK(out.shape() == std::vector<int>{1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(out[i] == 3.0f);
}

TEST_CASE("fully-connected with zero weights gives zero input grad") {
  Layer<float> fc = FullyConnected<float>("t.fc", 3, 2);
  Rng rng(3);
  Tensor<float> in = random_tensor<float>({3}, rng);
  Tensor<float> up = random_tensor<float>({2}, rng);
  Tensor<float> din = layer_backward(fc, in, up);
  for (int i = 0; i < 3; ++i) CHECK(din[i] == 0.f);
}

TEST_CASE("conv3x3 shape contract and shape errors") {
  Layer<float> conv = Conv3x3<float>("t.conv", 1, 2, 4);
  Rng rng(5);
  std::get<Conv3x3<float>>(conv).weight.value =
      random_tensor<float>({4, 2, 3, 3}, rng);
  Tensor<float> in = random_tensor<float>({2, 6, 6}, rng);
  Tensor<float> out = layer_forward(conv, in);
  CHECK(out.shape() == std::vector<int>{4, 6, 6});

  Tensor<float> bad = random_tensor<float>({3, 6, 6}, rng);
  CHECK_THROWS_AS(layer_forward(conv, bad), ContractViolation);
  Tensor<float> bad_up = random_tensor<float>({4, 5, 6}, rng);
  CHECK_THROWS_AS(layer_backward(conv, in, bad_up), ContractViolation);
}

TEST_CASE("conv3x3 gradient matches finite differences") {
  Rng rng(11);
  Layer<float> conv = Conv3x3<float>("t.conv", 1, 1, 2);
  glorot_init(conv, rng);
  Tensor<float> in = random_tensor<float>({1, 4, 4}, rng, -1.0, 1.0);
  Rng probe_rng = rng.derive(1);
  const double err = grad_check_layer(conv, in, 1e-3, probe_rng);
  CHECK(err < 1e-3);
}

TEST_CASE("grad_check across every layer kind, f32 and f64") {
  for (int seed = 0; seed < 25; ++seed) {
    Rng rng(1000 + seed);
    {
      Layer<float> conv = Conv3x3<float>("g.conv", 1, 2, 3);
      glorot_init(conv, rng);
      Tensor<float> in = random_tensor<float>({2, 4, 4}, rng, -1.0, 1.0);
      Rng pr = rng.derive(2);
      CHECK(grad_check_layer(conv, in, 1e-3, pr) < 1e-3);
    }
    {
      Layer<float> fc = FullyConnected<float>("g.fc", 8, 5);
      glorot_init(fc, rng);
      Tensor<float> in = random_tensor<float>({8}, rng, -1.0, 1.0);
      Rng pr = rng.derive(3);
      CHECK(grad_check_layer(fc, in, 1e-3, pr) < 1e-3);
    }
    {
      Layer<float> relu = Relu{};
      Tensor<float> in = kink_free_tensor<float>({10}, rng, 1e-2);
      Rng pr = rng.derive(4);
      CHECK(grad_check_layer(relu, in, 1e-3, pr) < 1e-3);
    }
    {
      Layer<float> mp = MaxPool2x2{};
      Tensor<float> in = kink_free_tensor<float>({2, 4, 4}, rng, 1e-2);
      Rng pr = rng.derive(5);
      CHECK(grad_check_layer(mp, in, 1e-3, pr) < 1e-3);
    }
    {
      Layer<float> sm = Softmax{};
      Tensor<float> in = random_tensor<float>({6}, rng, -2.0, 2.0);
      Rng pr = rng.derive(6);
      CHECK(grad_check_layer(sm, in, 1e-3, pr) < 1e-3);
    }
    // 64-bit verification mode.
    {
      Layer<double> conv = Conv3x3<double>("g.conv64", 1, 2, 3);
      glorot_init(conv, rng);
      Tensor<double> in = random_tensor<double>({2, 4, 4}, rng, -1.0, 1.0);
      Rng pr = rng.derive(7);
      CHECK(grad_check_layer(conv, in, 1e-3, pr) < 1e-6);
    }
    {
      Layer<double> sm = Softmax{};
      Tensor<double> in = random_tensor<double>({6}, rng, -2.0, 2.0);
      Rng pr = rng.derive(8);
      CHECK(grad_check_layer(sm, in, 1e-3, pr) < 1e-6);
    }
  }
}

TEST_CASE("grad_check on relu away from zero is near-exact") {
  Rng rng(21);
  Layer<float> relu = Relu{};
  Tensor<float> in = kink_free_tensor<float>({8}, rng, 0.5);
  Rng pr = rng.derive(1);
  CHECK(grad_check_layer(relu, in, 1e-4, pr) < 1e-6);
}

TEST_CASE("grad_check on softmax + cross-entropy composite") {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<float> logits = random_tensor<float>({10}, rng, -2.0, 2.0);
    const int target = rng.uniform_int(0, 9);
    Layer<float> sm = Softmax{};

    // FD side runs in double so the oracle resolves below the tolerance.
    Layer<double> sm_d = Softmax{};
    auto loss = [&](const Tensor<double>& x) -> double {
      Tensor<double> p = layer_forward(sm_d, x);
      return -std::log(p[target]);
    };
    // d(-log p_t)/dlogit = p - onehot(t), with p from the 32-bit forward.
    Tensor<float> p = layer_forward(sm, logits);
    Tensor<double> analytic({10});
    for (int i = 0; i < 10; ++i)
      analytic[i] = static_cast<double>(p[i]) - (i == target ? 1.0 : 0.0);
    CHECK(grad_check(loss, analytic, logits.cast<double>(), 1e-3) < 1e-3);
  }
}

TEST_CASE("adam single step matches hand computation") {
  Param<float> p("t.p", {1});
  p.value[0] = 0.f;
  p.grad[0] = 1.f;
  std::vector<Param<float>*> params{&p};
  adam_step(params, 0.1);
  // -0.1 * 1/(1 + 1e-8)
  CHECK(p.value[0] == doctest::Approx(-0.099999999).epsilon(1e-7));
  CHECK(p.step_count == 1);
  CHECK(p.grad[0] == 0.f);
}

TEST_CASE("adam with zero gradient leaves value unchanged") {
  Param<float> p("t.p", {3});
  p.value[0] = 1.5f;
  p.value[1] = -2.f;
  p.value[2] = 0.25f;
  std::vector<Param<float>*> params{&p};
  adam_step(params, 0.1);
  CHECK(p.value[0] == 1.5f);
  CHECK(p.value[1] == -2.f);
  CHECK(p.value[2] == 0.25f);
  CHECK(p.step_count == 1);
}

TEST_CASE("adam two identical gradients match scripted oracle") {
  Param<float> p("t.p", {1});
  std::vector<Param<float>*> params{&p};
  ScalarAdamOracle oracle;
  double expected = oracle.step(0.0, 1.0, 0.1);
  expected = oracle.step(expected, 1.0, 0.1);

  p.grad[0] = 1.f;
  adam_step(params, 0.1);
  p.grad[0] = 1.f;
  adam_step(params, 0.1);
  CHECK(p.value[0] == doctest::Approx(expected).epsilon(1e-6));
  CHECK(p.step_count == 2);
}

TEST_CASE("adam aborts on non-finite gradient naming the param") {
  Param<float> p("offending.param", {1});
  p.grad[0] = std::numeric_limits<float>::quiet_NaN();
  std::vector<Param<float>*> params{&p};
  try {
    adam_step(params, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("offending.param") != std::string::npos);
  }
}

TEST_CASE("layer_forward is deterministic") {
  Rng rng(31);
  Layer<float> conv = Conv3x3<float>("d.conv", 1, 3, 5);
  glorot_init(conv, rng);
  Tensor<float> in = random_tensor<float>({3, 8, 8}, rng);
  Tensor<float> a = layer_forward(conv, in);
  Tensor<float> b = layer_forward(conv, in);
  REQUIRE(a.size() == b.size());
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("sequential forward/backward round trip shapes") {
  Rng rng(41);
  Sequential<float> net;
  net.layers.push_back(Conv3x3<float>("s.c1", 1, 1, 4));
  net.layers.push_back(Relu{});
  net.layers.push_back(MaxPool2x2{});
  net.layers.push_back(FullyConnected<float>("s.fc", 4 * 4 * 4, 3));
  net.init(rng);

  Tensor<float> in = random_tensor<float>({1, 8, 8}, rng);
  auto acts = net.forward_cached(in);
  REQUIRE(acts.size() == 5);
  CHECK(acts.back().shape() == std::vector<int>{3});

  Tensor<float> up = random_tensor<float>({3}, rng);
  Tensor<float> din = net.backward(acts, up);
  CHECK(din.shape() == in.shape());
  CHECK(din.all_finite());

  std::vector<Param<float>*> params;
  net.collect(params);
  CHECK(params.size() == 4);
  for (auto* p : params) CHECK(p->grad.all_finite());
}
