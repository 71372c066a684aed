#pragma once

#include <algorithm>
#include <string>

#include "assl/nn/layers.hpp"

namespace assl::attention {

struct CbamSpec {
  int64_t reduction = 16;
  int64_t spatial_kernel = 7;
  // Placement is resolved by the backbone builder: the block sits right
  // after the last convolutional stage, ahead of any expansion head.
  std::string placement = "last_stage";

  void validate() const {
    if (reduction < 1) throw std::invalid_argument("cbam: reduction must be >= 1");
    if (spatial_kernel % 2 == 0)
      throw std::invalid_argument("cbam: spatial kernel must be odd");
  }
};

/// Convolutional block attention: a channel gate from pooled descriptors
/// through a shared bias-free MLP, then a spatial gate from a k x k conv over
/// the channel-mean/max maps. Both gates are multiplicative and bounded to
/// (0,1), so the block is an elementwise contraction of its input.
template <typename T>
struct CbamBlock {
  ag::Var<T> mlp_w1, mlp_w2;       // shared channel MLP, no biases
  ag::Var<T> spatial_w, spatial_b;  // 2 -> 1 conv, bias enabled
  int64_t channels = 0;
  int64_t kernel = 7;

  CbamBlock() = default;

  CbamBlock(nn::ParamStore<T>& store, const std::string& prefix,
            int64_t channels_in, const CbamSpec& spec, Rng& rng)
      : channels(channels_in), kernel(spec.spatial_kernel) {
    spec.validate();
    int64_t squeezed = std::max<int64_t>(1, channels_in / spec.reduction);
    mlp_w1 = store.add_param(prefix + ".channel_mlp.w1",
                             nn::linear_init<T>(squeezed, channels_in, rng));
    mlp_w2 = store.add_param(prefix + ".channel_mlp.w2",
                             nn::linear_init<T>(channels_in, squeezed, rng));
    spatial_w = store.add_param(
        prefix + ".spatial.conv.weight",
        nn::conv_init<T>(1, 2, spec.spatial_kernel, spec.spatial_kernel, rng));
    spatial_b = store.add_param(prefix + ".spatial.conv.bias",
                                Tensor<T>::zeros({1}), true);
  }

  ag::Var<T> channel_gate(const ag::Var<T>& x) {
    auto mlp = [this](const ag::Var<T>& v) {
      return ag::linear<T>(ag::relu(ag::linear<T>(v, mlp_w1, nullptr)), mlp_w2,
                           nullptr);
    };
    auto avg = mlp(ag::global_avg_pool(x));
    auto mx = mlp(ag::global_max_pool(x));
    auto gate = ag::sigmoid(ag::add(avg, mx));
    const auto& s = x->value.shape();
    return ag::reshape(gate, {s[0], s[1], int64_t(1), int64_t(1)});
  }

  ag::Var<T> spatial_gate(const ag::Var<T>& x) {
    auto desc = ag::concat_channels(ag::channel_mean(x), ag::channel_max(x));
    ag::ConvGeom geom;
    geom.stride = 1;
    geom.pad = kernel / 2;
    geom.groups = 1;
    return ag::sigmoid(ag::conv2d<T>(desc, spatial_w, spatial_b, geom));
  }

  /// spatial_gate( channel_gate ( x ) ) applied multiplicatively, channel first.
  ag::Var<T> forward(const ag::Var<T>& x) {
    flops::ScopeGuard scope("cbam");
    auto after_channel = ag::mul_gate(x, channel_gate(x));
    return ag::mul_gate(after_channel, spatial_gate(after_channel));
  }
};

}  // namespace assl::attention
