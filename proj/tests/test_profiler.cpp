#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "assl/profile/profiler.hpp"

using namespace assl;
using namespace assl::profile;

namespace {

backbones::FeatureExtractor<float> make(backbones::Family family,
                                        bool cbam = false) {
  backbones::BackboneSpec spec;
  spec.family = family;
  spec.with_cbam = cbam;
  return backbones::FeatureExtractor<float>(spec, 1);
}

}  // namespace

TEST_CASE("parameter counting") {
  SUBCASE("a 1536->4 linear map with bias holds 6148 values") {
    nn::ParamStore<float> store;
    Rng rng(1);
    store.add_param("head.weight", nn::linear_init<float>(4, 1536, rng));
    store.add_param("head.bias", Tensor<float>::zeros({4}), true);
    CHECK(store.total_size() == 6148);
  }
  SUBCASE("attention delta on effnet-b3 matches the expected band") {
    auto plain = make(backbones::Family::effnet_b3);
    auto gated = make(backbones::Family::effnet_b3, true);
    int64_t delta = count_params(gated) - count_params(plain);
    CHECK(delta >= 18400);
    CHECK(delta <= 19600);
  }
  SUBCASE("breakdown sums to the total") {
    auto net = make(backbones::Family::effnet_b0, true);
    std::vector<LayerCost> layers;
    int64_t total = count_params(net, &layers);
    int64_t sum = 0;
    for (const auto& l : layers) sum += l.params;
    CHECK(sum == total);
    CHECK(layers.size() > 5);
  }
  SUBCASE("counts are independent of resolution") {
    backbones::BackboneSpec a, b;
    a.family = b.family = backbones::Family::effnet_b1;
    a.input_resolution = 64;
    b.input_resolution = 224;
    backbones::FeatureExtractor<float> na(a, 1), nb(b, 1);
    CHECK(count_params(na) == count_params(nb));
  }
  SUBCASE("efficiency ratio against the larger baseline") {
    auto b3 = make(backbones::Family::effnet_b3);
    auto r50 = make(backbones::Family::resnet50);
    CHECK(static_cast<double>(count_params(b3)) / count_params(r50) < 0.55);
  }
}

TEST_CASE("flop counting") {
  SUBCASE("single 3x3 conv, 1->1 channel, 4x4, stride 1, pad 1 is 144 MACs") {
    flops::Counter counter;
    {
      flops::CounterGuard guard(counter);
      ag::NoGradGuard no_grad;
      auto x = ag::constant(Tensor<float>::ones({1, 1, 4, 4}));
      auto w = ag::constant(Tensor<float>::ones({1, 1, 3, 3}));
      ag::conv2d<float>(x, w, nullptr, {1, 1, 1});
    }
    CHECK(counter.conv_macs == 144);
    CHECK(counter.total == 144);  // no bias, no activation
  }
  SUBCASE("per-image anchors at 224") {
    auto r50 = make(backbones::Family::resnet50);
    int64_t flops_r50 = count_flops(r50, 224);
    CHECK(std::abs(flops_r50 - 4.109e9) / 4.109e9 < 0.05);

    auto b3 = make(backbones::Family::effnet_b3);
    int64_t flops_b3 = count_flops(b3, 224);
    CHECK(std::abs(flops_b3 - 0.992e9) / 0.992e9 < 0.05);
  }
  SUBCASE("breakdown sums to the total") {
    auto net = make(backbones::Family::effnet_b0, true);
    std::vector<LayerCost> layers;
    int64_t total = count_flops(net, 64, &layers);
    int64_t sum = 0;
    for (const auto& l : layers) sum += l.flops;
    CHECK(sum == total);
  }
  SUBCASE("conv MACs scale exactly quadratically with resolution") {
    auto net = make(backbones::Family::effnet_b0);
    int64_t macs64 = 0, macs128 = 0;
    count_flops(net, 64, nullptr, &macs64);
    count_flops(net, 128, nullptr, &macs128);
    CHECK(macs128 == 4 * macs64);
  }
  SUBCASE("attention contributes under one percent on effnet-b3 at 224") {
    auto plain = make(backbones::Family::effnet_b3);
    auto gated = make(backbones::Family::effnet_b3, true);
    int64_t base = count_flops(plain, 224);
    int64_t with = count_flops(gated, 224);
    CHECK(with > base);
    CHECK(static_cast<double>(with - base) / base < 0.01);
  }
}

TEST_CASE("profile report invariants") {
  backbones::BackboneSpec spec;
  spec.family = backbones::Family::effnet_b0;
  spec.with_cbam = true;
  spec.input_resolution = 64;
  ProfileReport report = profile_model(spec, 64, 2, /*iterations=*/0);
  CHECK(report.params > 0);
  CHECK(report.flops > 0);
  CHECK(report.seconds_per_iteration == 0.0);
  int64_t psum = 0, fsum = 0;
  for (const auto& l : report.layers) {
    psum += l.params;
    fsum += l.flops;
  }
  CHECK(psum == report.params);
  CHECK(fsum == report.flops);
  auto j = report.to_json();
  CHECK(j.contains("params"));
  CHECK(j.contains("flops"));
  CHECK(j.contains("hardware"));
  CHECK(j["layers"].is_array());
}

TEST_CASE("benchmark smoke: stable repeated means") {
  backbones::BackboneSpec spec;
  spec.family = backbones::Family::effnet_b0;
  spec.input_resolution = 64;
  backbones::FeatureExtractor<float> net(spec, 1);
  CHECK_THROWS_AS(benchmark_iteration(net, 2, 64, 5), std::invalid_argument);
  double a = benchmark_iteration(net, 4, 64, 10);
  double b = benchmark_iteration(net, 4, 64, 10);
  CHECK(a > 0);
  CHECK(std::abs(a - b) / std::max(a, b) < 0.2);
  CHECK(!hardware_descriptor().empty());
}
