#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "assl/autograd/ops_basic.hpp"
#include "assl/autograd/ops_conv.hpp"
#include "assl/core/rng.hpp"

using namespace assl;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng,
                             double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

/// Central-difference check of d(scalar_fn)/d(leaf) for every leaf entry.
/// scalar_fn must rebuild the graph from the leaves on each call.
double max_rel_grad_error(
    const std::vector<ag::Var<double>>& leaves,
    const std::function<ag::Var<double>()>& scalar_fn, double h = 1e-5) {
  auto out = scalar_fn();
  ag::backward(out);
  std::vector<Tensor<double>> analytic;
  for (const auto& leaf : leaves) {
    REQUIRE(leaf->grad.defined());
    analytic.push_back(leaf->grad.clone());
  }
  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& value = leaves[li]->value;
    for (int64_t i = 0; i < value.size(); ++i) {
      double keep = value[i];
      value[i] = keep + h;
      double up = scalar_fn()->value[0];
      value[i] = keep - h;
      double down = scalar_fn()->value[0];
      value[i] = keep;
      double numeric = (up - down) / (2 * h);
      double a = analytic[li][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    leaves[li]->zero_grad();
  }
  return worst;
}

}  // namespace

TEST_CASE("backward releases intermediates but keeps parameters") {
  auto w = ag::make_leaf<double>(Tensor<double>::full({2, 2}, 0.5), true);
  auto x = ag::constant(Tensor<double>::ones({1, 2}));
  auto y = ag::mean_all(ag::linear<double>(x, w, nullptr));
  ag::backward(y);
  CHECK(w->grad.defined());
  CHECK(w->value.defined());
  CHECK(y->value.defined());  // root value survives for logging
  for (int64_t i = 0; i < 4; ++i) CHECK(w->grad[i] == doctest::Approx(0.5));
}

TEST_CASE("gradient accumulates when a node feeds two consumers") {
  auto x = ag::make_leaf<double>(Tensor<double>::full({1, 3}, 2.0), true);
  auto y = ag::mean_all(ag::add(x, x));
  ag::backward(y);
  for (int64_t i = 0; i < 3; ++i)
    CHECK(x->grad[i] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("no-grad mode skips graph recording") {
  auto x = ag::make_leaf<double>(Tensor<double>::ones({1, 4}), true);
  ag::NoGradGuard guard;
  auto y = ag::relu(x);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->inputs.empty());
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(11);
  SUBCASE("swish") {
    auto x = ag::make_leaf<double>(random_tensor({2, 5}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] { return ag::mean_all(ag::swish(x)); }) < 1e-7);
  }
  SUBCASE("sigmoid") {
    auto x = ag::make_leaf<double>(random_tensor({2, 5}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] { return ag::mean_all(ag::sigmoid(x)); }) < 1e-7);
  }
  SUBCASE("relu away from the kink") {
    auto x = ag::make_leaf<double>(random_tensor({2, 5}, rng), true);
    for (int64_t i = 0; i < x->value.size(); ++i)
      if (std::abs(x->value[i]) < 0.1) x->value[i] = 0.5;
    CHECK(max_rel_grad_error({x}, [&] { return ag::mean_all(ag::relu(x)); }) < 1e-7);
  }
  SUBCASE("scale and add") {
    auto a = ag::make_leaf<double>(random_tensor({3, 4}, rng), true);
    auto b = ag::make_leaf<double>(random_tensor({3, 4}, rng), true);
    CHECK(max_rel_grad_error({a, b}, [&] {
            return ag::mean_all(ag::add(ag::scale(a, 2.5), b));
          }) < 1e-7);
  }
  SUBCASE("l2 normalize rows") {
    auto x = ag::make_leaf<double>(random_tensor({4, 6}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::mean_all(ag::l2_normalize_rows(x));
          }) < 1e-6);
  }
}

TEST_CASE("gate multiply gradients") {
  Rng rng(12);
  SUBCASE("channel gate") {
    auto x = ag::make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
    auto g = ag::make_leaf<double>(random_tensor({2, 3, 1, 1}, rng), true);
    CHECK(max_rel_grad_error({x, g}, [&] {
            return ag::mean_all(ag::mul_gate(x, g));
          }) < 1e-7);
  }
  SUBCASE("spatial gate") {
    auto x = ag::make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
    auto g = ag::make_leaf<double>(random_tensor({2, 1, 4, 4}, rng), true);
    CHECK(max_rel_grad_error({x, g}, [&] {
            return ag::mean_all(ag::mul_gate(x, g));
          }) < 1e-7);
  }
}

TEST_CASE("pooling and channel statistics gradients") {
  Rng rng(13);
  SUBCASE("global average pool") {
    auto x = ag::make_leaf<double>(random_tensor({2, 3, 5, 5}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::mean_all(ag::global_avg_pool(x));
          }) < 1e-7);
  }
  SUBCASE("global max pool") {
    auto x = ag::make_leaf<double>(random_tensor({2, 3, 5, 5}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::mean_all(ag::global_max_pool(x));
          }) < 1e-6);
  }
  SUBCASE("channel mean and max") {
    auto x = ag::make_leaf<double>(random_tensor({2, 4, 3, 3}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::mean_all(
                ag::concat_channels(ag::channel_mean(x), ag::channel_max(x)));
          }) < 1e-6);
  }
  SUBCASE("max pool 3x3 stride 2") {
    auto x = ag::make_leaf<double>(random_tensor({1, 2, 7, 7}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::mean_all(ag::max_pool2d(x, 3, 2, 1));
          }) < 1e-6);
  }
}

TEST_CASE("linear and matmul gradients") {
  Rng rng(14);
  auto x = ag::make_leaf<double>(random_tensor({3, 4}, rng), true);
  auto w = ag::make_leaf<double>(random_tensor({5, 4}, rng), true);
  auto b = ag::make_leaf<double>(random_tensor({5}, rng), true);
  CHECK(max_rel_grad_error({x, w, b}, [&] {
          return ag::mean_all(ag::linear(x, w, b));
        }) < 1e-7);

  auto a = ag::make_leaf<double>(random_tensor({3, 4}, rng), true);
  CHECK(max_rel_grad_error({a}, [&] {
          return ag::mean_all(ag::matmul_nt(a, a));  // shared operand
        }) < 1e-7);
}

TEST_CASE("log softmax variants") {
  Rng rng(15);
  SUBCASE("plain rows sum to one") {
    auto x = ag::make_leaf<double>(random_tensor({3, 5}, rng), true);
    auto y = ag::log_softmax_rows(x, false);
    for (int64_t i = 0; i < 3; ++i) {
      double sum = 0;
      for (int64_t j = 0; j < 5; ++j) sum += std::exp(y->value.at(i, j));
      CHECK(sum == doctest::Approx(1.0));
    }
  }
  SUBCASE("gradient through nll") {
    auto x = ag::make_leaf<double>(random_tensor({4, 4}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::nll_rows(ag::log_softmax_rows(x, false), {1, 0, 3, 2});
          }) < 1e-7);
  }
  SUBCASE("diagonal-excluded gradient") {
    auto x = ag::make_leaf<double>(random_tensor({4, 4}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::nll_rows(ag::log_softmax_rows(x, true), {1, 0, 3, 2});
          }) < 1e-7);
  }
  SUBCASE("weighted nll") {
    Rng wrng(20);
    Tensor<double> weights = random_tensor({3, 4}, wrng);
    for (int64_t i = 0; i < weights.size(); ++i)
      weights[i] = std::abs(weights[i]);
    auto x = ag::make_leaf<double>(random_tensor({3, 4}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::weighted_nll(ag::log_softmax_rows(x, false), weights);
          }) < 1e-7);
  }
  SUBCASE("cross entropy") {
    auto x = ag::make_leaf<double>(random_tensor({5, 4}, rng), true);
    CHECK(max_rel_grad_error({x}, [&] {
            return ag::cross_entropy(x, {0, 1, 2, 3, 1});
          }) < 1e-7);
  }
}

TEST_CASE("conv2d matches a scalar loop reference") {
  Rng rng(16);
  // 3x3, stride 2, pad 1, 2 input channels, 3 outputs.
  Tensor<double> xt = random_tensor({1, 2, 5, 5}, rng);
  Tensor<double> wt = random_tensor({3, 2, 3, 3}, rng);
  auto x = ag::constant(xt);
  auto w = ag::constant(wt);
  ag::ConvGeom geom{2, 1, 1};
  auto y = ag::conv2d<double>(x, w, nullptr, geom);
  REQUIRE(y->value.shape() == std::vector<int64_t>({1, 3, 3, 3}));
  for (int64_t co = 0; co < 3; ++co)
    for (int64_t oh = 0; oh < 3; ++oh)
      for (int64_t ow = 0; ow < 3; ++ow) {
        double acc = 0;
        for (int64_t ci = 0; ci < 2; ++ci)
          for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 3; ++j) {
              int64_t ih = oh * 2 - 1 + i, iw = ow * 2 - 1 + j;
              if (ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
              acc += xt.at(0, ci, ih, iw) * wt.at(co, ci, i, j);
            }
        CHECK(y->value.at(0, co, oh, ow) == doctest::Approx(acc).epsilon(1e-10));
      }
}

TEST_CASE("conv2d gradients (general, pointwise, depthwise, bias)") {
  Rng rng(17);
  SUBCASE("general 3x3") {
    auto x = ag::make_leaf<double>(random_tensor({2, 2, 5, 5}, rng), true);
    auto w = ag::make_leaf<double>(random_tensor({3, 2, 3, 3}, rng, 0.5), true);
    CHECK(max_rel_grad_error({x, w}, [&] {
            return ag::mean_all(ag::conv2d<double>(x, w, nullptr, {1, 1, 1}));
          }) < 1e-6);
  }
  SUBCASE("pointwise 1x1") {
    auto x = ag::make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
    auto w = ag::make_leaf<double>(random_tensor({5, 3, 1, 1}, rng, 0.5), true);
    CHECK(max_rel_grad_error({x, w}, [&] {
            return ag::mean_all(ag::conv2d<double>(x, w, nullptr, {1, 0, 1}));
          }) < 1e-6);
  }
  SUBCASE("depthwise 3x3 stride 2") {
    auto x = ag::make_leaf<double>(random_tensor({2, 4, 6, 6}, rng), true);
    auto w = ag::make_leaf<double>(random_tensor({4, 1, 3, 3}, rng, 0.5), true);
    CHECK(max_rel_grad_error({x, w}, [&] {
            return ag::mean_all(ag::conv2d<double>(x, w, nullptr, {2, 1, 4}));
          }) < 1e-6);
  }
  SUBCASE("bias") {
    auto x = ag::make_leaf<double>(random_tensor({2, 2, 4, 4}, rng), true);
    auto w = ag::make_leaf<double>(random_tensor({1, 2, 7, 7}, rng, 0.3), true);
    auto b = ag::make_leaf<double>(random_tensor({1}, rng), true);
    CHECK(max_rel_grad_error({x, w, b}, [&] {
            return ag::mean_all(ag::conv2d<double>(x, w, b, {1, 3, 1}));
          }) < 1e-6);
  }
}

TEST_CASE("conv2d stride-2 output size is ceil(n/2) for odd kernels") {
  for (int64_t n : {6, 7, 8, 9}) {
    auto x = ag::constant(Tensor<double>::ones({1, 1, n, n}));
    auto w = ag::constant(Tensor<double>::ones({1, 1, 3, 3}));
    auto y = ag::conv2d<double>(x, w, nullptr, {2, 1, 1});
    CHECK(y->value.dim(2) == (n + 1) / 2);
  }
}

TEST_CASE("batch norm") {
  Rng rng(18);
  SUBCASE("training output is standardized") {
    Tensor<double> xt = random_tensor({4, 3, 5, 5}, rng, 2.0);
    auto x = ag::constant(xt);
    auto gamma = ag::constant(Tensor<double>::ones({3}));
    auto beta = ag::constant(Tensor<double>::zeros({3}));
    Tensor<double> rm = Tensor<double>::zeros({3});
    Tensor<double> rv = Tensor<double>::ones({3});
    auto y = ag::batch_norm_act<double>(x, gamma, beta, rm, rv, true, 0.1,
                                        1e-5, ag::Act::none);
    const int64_t HW = 25, N = 4, C = 3;
    for (int64_t c = 0; c < C; ++c) {
      double sum = 0, sq = 0;
      for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i) {
          double v = y->value[(n * C + c) * HW + i];
          sum += v;
          sq += v * v;
        }
      CHECK(sum / (N * HW) == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(sq / (N * HW) == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(rm[c] != 0.0);  // running stats moved off initialization
    }
  }
  SUBCASE("training gradients, fused activations") {
    for (ag::Act act : {ag::Act::none, ag::Act::relu, ag::Act::swish}) {
      auto x = ag::make_leaf<double>(random_tensor({3, 2, 4, 4}, rng), true);
      auto gamma = ag::make_leaf<double>(random_tensor({2}, rng, 0.5), true);
      auto beta = ag::make_leaf<double>(random_tensor({2}, rng, 0.5), true);
      for (int64_t i = 0; i < gamma->value.size(); ++i)
        gamma->value[i] += 1.0;  // keep gamma away from zero
      Tensor<double> rm = Tensor<double>::zeros({2});
      Tensor<double> rv = Tensor<double>::ones({2});
      CHECK(max_rel_grad_error({x, gamma, beta}, [&] {
              return ag::mean_all(ag::batch_norm_act<double>(
                  x, gamma, beta, rm, rv, true, 0.0, 1e-5, act));
            }) < 1e-5);
    }
  }
  SUBCASE("eval mode uses running statistics and is per-sample") {
    auto gamma = ag::constant(Tensor<double>::ones({2}));
    auto beta = ag::constant(Tensor<double>::zeros({2}));
    Tensor<double> rm = Tensor<double>::full({2}, 0.5);
    Tensor<double> rv = Tensor<double>::full({2}, 4.0);
    Tensor<double> xt = random_tensor({2, 2, 3, 3}, rng);
    auto y = ag::batch_norm_act<double>(ag::constant(xt), gamma, beta, rm, rv,
                                        false, 0.1, 0.0, ag::Act::none);
    for (int64_t i = 0; i < xt.size(); ++i)
      CHECK(y->value[i] == doctest::Approx((xt[i] - 0.5) / 2.0));
  }
  SUBCASE("eval-mode gradient") {
    auto x = ag::make_leaf<double>(random_tensor({2, 2, 3, 3}, rng), true);
    auto gamma = ag::make_leaf<double>(Tensor<double>::full({2}, 1.3), true);
    auto beta = ag::make_leaf<double>(Tensor<double>::full({2}, -0.2), true);
    Tensor<double> rm = Tensor<double>::full({2}, 0.1);
    Tensor<double> rv = Tensor<double>::full({2}, 0.8);
    CHECK(max_rel_grad_error({x, gamma, beta}, [&] {
            return ag::mean_all(ag::batch_norm_act<double>(
                x, gamma, beta, rm, rv, false, 0.0, 1e-5, ag::Act::swish));
          }) < 1e-6);
  }
}

TEST_CASE("non-finite input to select_entry backward path") {
  // select_entry seeds a single-logit sweep, used by attribution code.
  Rng rng(21);
  auto x = ag::make_leaf<double>(random_tensor({2, 3}, rng), true);
  auto y = ag::select_entry(x, 1, 2);
  ag::backward(y);
  CHECK(x->grad.at(0, 0) == 0.0);
  CHECK(x->grad.at(1, 2) == 1.0);
}
