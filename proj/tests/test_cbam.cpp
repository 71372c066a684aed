#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "assl/attention/cbam.hpp"

using namespace assl;
using attention::CbamBlock;
using attention::CbamSpec;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng,
                             double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

CbamBlock<double> make_block(nn::ParamStore<double>& store, int64_t channels,
                             int64_t r, int64_t k, uint64_t seed) {
  CbamSpec spec;
  spec.reduction = r;
  spec.spatial_kernel = k;
  Rng rng(seed);
  return CbamBlock<double>(store, "cbam", channels, spec, rng);
}

}  // namespace

TEST_CASE("zero-initialized gates sit at one half") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 4, 2, 7, 1);
  for (auto& p : store.params()) p.var->value.fill(0.0);
  Rng rng(2);
  auto x = ag::constant(random_tensor({1, 4, 3, 3}, rng));
  auto cg = block.channel_gate(x);
  for (int64_t i = 0; i < cg->value.size(); ++i)
    CHECK(cg->value[i] == doctest::Approx(0.5).epsilon(1e-12));
  auto sg = block.spatial_gate(x);
  for (int64_t i = 0; i < sg->value.size(); ++i)
    CHECK(sg->value[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("per-channel-constant input collapses avg and max paths") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 4, 2, 7, 3);
  Tensor<double> xt({1, 4, 2, 2});
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < 4; ++i) xt[c * 4 + i] = 0.3 * (c + 1);
  auto gate = block.channel_gate(ag::constant(xt));

  // Reference: sigmoid(2 * MLP(v)) with v the per-channel constants.
  const auto& w1 = block.mlp_w1->value;  // [2,4]
  const auto& w2 = block.mlp_w2->value;  // [4,2]
  double hidden[2];
  for (int64_t j = 0; j < 2; ++j) {
    double acc = 0;
    for (int64_t c = 0; c < 4; ++c) acc += w1.at(j, c) * 0.3 * (c + 1);
    hidden[j] = std::max(0.0, acc);
  }
  for (int64_t c = 0; c < 4; ++c) {
    double acc = 0;
    for (int64_t j = 0; j < 2; ++j) acc += w2.at(c, j) * hidden[j];
    double expected = 1.0 / (1.0 + std::exp(-2.0 * acc));
    CHECK(gate->value[c] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("channel gate matches a scalar reference on random input") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 4, 2, 7, 4);
  Rng rng(5);
  Tensor<double> xt = random_tensor({1, 4, 2, 2}, rng);
  auto gate = block.channel_gate(ag::constant(xt));

  const auto& w1 = block.mlp_w1->value;
  const auto& w2 = block.mlp_w2->value;
  auto mlp = [&](const double* v, double* out) {
    double hidden[2];
    for (int64_t j = 0; j < 2; ++j) {
      double acc = 0;
      for (int64_t c = 0; c < 4; ++c) acc += w1.at(j, c) * v[c];
      hidden[j] = std::max(0.0, acc);
    }
    for (int64_t c = 0; c < 4; ++c) {
      double acc = 0;
      for (int64_t j = 0; j < 2; ++j) acc += w2.at(c, j) * hidden[j];
      out[c] = acc;
    }
  };
  double avg[4], mx[4];
  for (int64_t c = 0; c < 4; ++c) {
    double s = 0, m = -1e30;
    for (int64_t i = 0; i < 4; ++i) {
      s += xt[c * 4 + i];
      m = std::max(m, xt[c * 4 + i]);
    }
    avg[c] = s / 4;
    mx[c] = m;
  }
  double mlp_avg[4], mlp_max[4];
  mlp(avg, mlp_avg);
  mlp(mx, mlp_max);
  for (int64_t c = 0; c < 4; ++c) {
    double expected = 1.0 / (1.0 + std::exp(-(mlp_avg[c] + mlp_max[c])));
    CHECK(gate->value[c] == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("spatial gate preserves the plane for k in {3,7}") {
  for (int64_t k : {3, 7}) {
    nn::ParamStore<double> store;
    auto block = make_block(store, 3, 1, k, 6);
    Rng rng(7);
    auto x = ag::constant(random_tensor({2, 3, 4, 5}, rng));
    auto gate = block.spatial_gate(x);
    CHECK(gate->value.shape() == std::vector<int64_t>({2, 1, 4, 5}));
    for (int64_t i = 0; i < gate->value.size(); ++i) {
      CHECK(gate->value[i] > 0.0);
      CHECK(gate->value[i] < 1.0);
    }
  }
}

TEST_CASE("spatial gate matches a scalar reference") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 3, 1, 3, 8);
  Rng rng(9);
  Tensor<double> xt = random_tensor({1, 3, 4, 4}, rng);
  auto gate = block.spatial_gate(ag::constant(xt));

  const auto& w = block.spatial_w->value;  // [1,2,3,3]
  const double b = block.spatial_b->value[0];
  for (int64_t oh = 0; oh < 4; ++oh)
    for (int64_t ow = 0; ow < 4; ++ow) {
      double acc = b;
      for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
          int64_t ih = oh - 1 + i, iw = ow - 1 + j;
          if (ih < 0 || ih >= 4 || iw < 0 || iw >= 4) continue;
          double mean = 0, mx = -1e30;
          for (int64_t c = 0; c < 3; ++c) {
            mean += xt.at(0, c, ih, iw);
            mx = std::max(mx, xt.at(0, c, ih, iw));
          }
          mean /= 3;
          acc += w.at(0, 0, i, j) * mean + w.at(0, 1, i, j) * mx;
        }
      double expected = 1.0 / (1.0 + std::exp(-acc));
      CHECK(gate->value[oh * 4 + ow] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("apply preserves shape and contracts elementwise") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 6, 3, 7, 10);
  Rng rng(11);
  Tensor<double> xt = random_tensor({2, 6, 5, 5}, rng, 2.0);
  auto y = block.forward(ag::constant(xt));
  REQUIRE(y->value.same_shape(xt));
  for (int64_t i = 0; i < xt.size(); ++i)
    CHECK(std::abs(y->value[i]) <= std::abs(xt[i]));
}

TEST_CASE("channel gate applies before the spatial gate") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 2, 1, 3, 12);
  Rng rng(13);
  Tensor<double> xt = random_tensor({1, 2, 2, 2}, rng);
  auto x = ag::constant(xt);
  auto y = block.forward(x);

  auto after_channel = ag::mul_gate(x, block.channel_gate(x));
  auto expected =
      ag::mul_gate(after_channel, block.spatial_gate(after_channel));
  for (int64_t i = 0; i < y->value.size(); ++i)
    CHECK(y->value[i] == doctest::Approx(expected->value[i]).epsilon(1e-12));
}

TEST_CASE("composed pipeline matches a hand-set scalar evaluation") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 2, 1, 3, 14);
  // Hand weights: identity-ish MLP and a centered spatial kernel.
  block.mlp_w1->value.fill(0.0);
  block.mlp_w1->value.at(0, 0) = 1.0;
  block.mlp_w1->value.at(1, 1) = -0.5;
  block.mlp_w2->value.fill(0.0);
  block.mlp_w2->value.at(0, 0) = 0.7;
  block.mlp_w2->value.at(1, 1) = 0.4;
  block.spatial_w->value.fill(0.0);
  block.spatial_w->value.at(0, 0, 1, 1) = 1.0;   // center tap on mean map
  block.spatial_w->value.at(0, 1, 1, 1) = -1.0;  // center tap on max map
  block.spatial_b->value[0] = 0.25;

  Tensor<double> xt({1, 2, 2, 2});
  double vals[8] = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8};
  for (int64_t i = 0; i < 8; ++i) xt[i] = vals[i];
  auto y = block.forward(ag::constant(xt));

  auto relu = [](double v) { return v > 0 ? v : 0.0; };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  // Channel gate.
  double avg0 = (0.1 - 0.2 + 0.3 + 0.4) / 4, avg1 = (-0.5 + 0.6 - 0.7 + 0.8) / 4;
  double max0 = 0.4, max1 = 0.8;
  auto mlp = [&](double c0, double c1, int64_t out_c) {
    double h0 = relu(1.0 * c0), h1 = relu(-0.5 * c1);
    return out_c == 0 ? 0.7 * h0 : 0.4 * h1;
  };
  double g0 = sig(mlp(avg0, avg1, 0) + mlp(max0, max1, 0));
  double g1 = sig(mlp(avg0, avg1, 1) + mlp(max0, max1, 1));
  double after_c[8];
  for (int64_t i = 0; i < 4; ++i) after_c[i] = vals[i] * g0;
  for (int64_t i = 4; i < 8; ++i) after_c[i] = vals[i] * g1;
  // Spatial gate (center-only kernel => per-pixel mean/max of gated input).
  for (int64_t i = 0; i < 4; ++i) {
    double mean = (after_c[i] + after_c[4 + i]) / 2;
    double mx = std::max(after_c[i], after_c[4 + i]);
    double s = sig(mean - mx + 0.25);
    CHECK(y->value[i] == doctest::Approx(after_c[i] * s).epsilon(1e-12));
    CHECK(y->value[4 + i] == doctest::Approx(after_c[4 + i] * s).epsilon(1e-12));
  }
}

TEST_CASE("cbam parameter count formula") {
  auto count = [](int64_t C, int64_t r, int64_t k) {
    nn::ParamStore<double> store;
    auto block = make_block(store, C, r, k, 15);
    (void)block;
    return store.total_size();
  };
  // 2*C*floor(C/r) for the shared MLP plus k*k*2 + 1 for the spatial conv.
  CHECK(count(384, 16, 7) == 2 * 384 * 24 + 7 * 7 * 2 + 1);
  CHECK(count(384, 16, 7) >= 18400);
  CHECK(count(384, 16, 7) <= 19600);
  CHECK(count(32, 4, 3) == 2 * 32 * 8 + 3 * 3 * 2 + 1);
}

TEST_CASE("full cbam gradient vs central differences") {
  nn::ParamStore<double> store;
  auto block = make_block(store, 4, 2, 3, 16);
  Rng rng(17);
  auto x = ag::make_leaf<double>(random_tensor({2, 4, 3, 3}, rng), true);

  auto loss_fn = [&] { return ag::mean_all(block.forward(x)); };
  auto out = loss_fn();
  ag::backward(out);
  std::vector<Tensor<double>> analytic;
  std::vector<ag::Var<double>> leaves = {x};
  for (auto& p : store.params()) leaves.push_back(p.var);
  for (auto& leaf : leaves) {
    REQUIRE(leaf->grad.defined());
    analytic.push_back(leaf->grad.clone());
  }
  const double h = 1e-5;
  double worst = 0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& value = leaves[li]->value;
    for (int64_t i = 0; i < value.size(); ++i) {
      double keep = value[i];
      value[i] = keep + h;
      double up = loss_fn()->value[0];
      value[i] = keep - h;
      double down = loss_fn()->value[0];
      value[i] = keep;
      double numeric = (up - down) / (2 * h);
      double a = analytic[li][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("spec validation") {
  CbamSpec bad;
  bad.spatial_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.spatial_kernel = 7;
  bad.reduction = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
