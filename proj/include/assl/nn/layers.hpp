#pragma once

#include <string>

#include "assl/autograd/ops_basic.hpp"
#include "assl/autograd/ops_conv.hpp"
#include "assl/nn/init.hpp"
#include "assl/nn/module.hpp"

namespace assl::nn {

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEpsilon = 1e-5;

/// Conv -> BatchNorm -> activation, bias-free conv. Padding is k/2 so odd
/// kernels map H to ceil(H/stride).
template <typename T>
struct ConvBnAct {
  ag::Var<T> weight, gamma, beta;
  Tensor<T> running_mean, running_var;
  ag::ConvGeom geom;
  ag::Act act;

  ConvBnAct() = default;

  ConvBnAct(ParamStore<T>& store, const std::string& conv_name,
            const std::string& bn_name, int64_t cin, int64_t cout, int64_t k,
            int64_t stride, int64_t groups, ag::Act activation, Rng& rng)
      : act(activation) {
    geom.stride = stride;
    geom.pad = k / 2;
    geom.groups = groups;
    weight = store.add_param(conv_name + ".weight",
                             conv_init<T>(cout, cin / groups, k, k, rng));
    gamma = store.add_param(bn_name + ".gamma", Tensor<T>::ones({cout}), true);
    beta = store.add_param(bn_name + ".beta", Tensor<T>::zeros({cout}), true);
    running_mean = store.add_buffer(bn_name + ".running_mean", Tensor<T>::zeros({cout}));
    running_var = store.add_buffer(bn_name + ".running_var", Tensor<T>::ones({cout}));
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    auto y = ag::conv2d<T>(x, weight, nullptr, geom);
    return ag::batch_norm_act<T>(y, gamma, beta, running_mean, running_var,
                                 training, static_cast<T>(kBnMomentum),
                                 static_cast<T>(kBnEpsilon), act);
  }
};

/// Squeeze-and-excitation gate computed from globally pooled features.
/// Reduction is taken from the block's input channels, as in the reference
/// EfficientNet design.
template <typename T>
struct SqueezeExcite {
  ag::Var<T> w_reduce, b_reduce, w_expand, b_expand;
  int64_t channels = 0;

  SqueezeExcite() = default;

  SqueezeExcite(ParamStore<T>& store, const std::string& prefix,
                int64_t channels_in, int64_t squeezed, Rng& rng)
      : channels(channels_in) {
    w_reduce = store.add_param(prefix + ".reduce.weight",
                               linear_init<T>(squeezed, channels_in, rng));
    b_reduce = store.add_param(prefix + ".reduce.bias",
                               Tensor<T>::zeros({squeezed}), true);
    w_expand = store.add_param(prefix + ".expand.weight",
                               linear_init<T>(channels_in, squeezed, rng));
    b_expand = store.add_param(prefix + ".expand.bias",
                               Tensor<T>::zeros({channels_in}), true);
  }

  ag::Var<T> forward(const ag::Var<T>& x) {
    const auto& s = x->value.shape();
    auto pooled = ag::global_avg_pool(x);  // [N,C]
    auto h = ag::swish(ag::linear(pooled, w_reduce, b_reduce));
    auto gate = ag::sigmoid(ag::linear(h, w_expand, b_expand));
    auto gate4 = ag::reshape(gate, {s[0], s[1], int64_t(1), int64_t(1)});
    return ag::mul_gate(x, gate4);
  }
};

/// Mobile inverted bottleneck: expand (1x1, skipped at ratio 1) -> depthwise
/// -> squeeze-excitation -> project (1x1, linear), with a residual when the
/// geometry allows it.
template <typename T>
struct MBConvBlock {
  ConvBnAct<T> expand, dw, project;
  SqueezeExcite<T> se;
  bool has_expand = false;
  bool has_se = false;
  bool residual = false;
  std::string name;

  MBConvBlock() = default;

  MBConvBlock(ParamStore<T>& store, const std::string& prefix, int64_t cin,
              int64_t cout, int64_t k, int64_t stride, int64_t expansion,
              double se_ratio, Rng& rng)
      : name(prefix) {
    int64_t mid = cin * expansion;
    if (expansion != 1) {
      expand = ConvBnAct<T>(store, prefix + ".expand.conv", prefix + ".expand.bn",
                            cin, mid, 1, 1, 1, ag::Act::swish, rng);
      has_expand = true;
    }
    dw = ConvBnAct<T>(store, prefix + ".dw.conv", prefix + ".dw.bn", mid, mid,
                      k, stride, mid, ag::Act::swish, rng);
    if (se_ratio > 0) {
      int64_t squeezed = std::max<int64_t>(1, static_cast<int64_t>(cin * se_ratio));
      se = SqueezeExcite<T>(store, prefix + ".se", mid, squeezed, rng);
      has_se = true;
    }
    project = ConvBnAct<T>(store, prefix + ".project.conv",
                           prefix + ".project.bn", mid, cout, 1, 1, 1,
                           ag::Act::none, rng);
    residual = (stride == 1 && cin == cout);
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    flops::ScopeGuard scope(name);
    auto h = x;
    if (has_expand) h = expand.forward(h, training);
    h = dw.forward(h, training);
    if (has_se) h = se.forward(h);
    h = project.forward(h, training);
    if (residual) h = ag::add(h, x);
    return h;
  }
};

/// ResNet basic block (two 3x3 convs).
template <typename T>
struct BasicBlock {
  ConvBnAct<T> conv1, conv2;
  ConvBnAct<T> downsample;
  bool has_downsample = false;
  std::string name;

  BasicBlock() = default;

  BasicBlock(ParamStore<T>& store, const std::string& prefix, int64_t cin,
             int64_t cout, int64_t stride, Rng& rng)
      : name(prefix) {
    conv1 = ConvBnAct<T>(store, prefix + ".conv1", prefix + ".bn1", cin, cout,
                         3, stride, 1, ag::Act::relu, rng);
    conv2 = ConvBnAct<T>(store, prefix + ".conv2", prefix + ".bn2", cout, cout,
                         3, 1, 1, ag::Act::none, rng);
    if (stride != 1 || cin != cout) {
      downsample = ConvBnAct<T>(store, prefix + ".downsample.conv",
                                prefix + ".downsample.bn", cin, cout, 1,
                                stride, 1, ag::Act::none, rng);
      has_downsample = true;
    }
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    flops::ScopeGuard scope(name);
    auto h = conv2.forward(conv1.forward(x, training), training);
    auto shortcut = has_downsample ? downsample.forward(x, training) : x;
    return ag::relu(ag::add(h, shortcut));
  }
};

/// ResNet bottleneck block (1x1 reduce, 3x3, 1x1 expand by 4).
template <typename T>
struct BottleneckBlock {
  ConvBnAct<T> conv1, conv2, conv3;
  ConvBnAct<T> downsample;
  bool has_downsample = false;
  std::string name;

  BottleneckBlock() = default;

  BottleneckBlock(ParamStore<T>& store, const std::string& prefix, int64_t cin,
                  int64_t width, int64_t stride, Rng& rng)
      : name(prefix) {
    const int64_t cout = width * 4;
    conv1 = ConvBnAct<T>(store, prefix + ".conv1", prefix + ".bn1", cin, width,
                         1, 1, 1, ag::Act::relu, rng);
    conv2 = ConvBnAct<T>(store, prefix + ".conv2", prefix + ".bn2", width,
                         width, 3, stride, 1, ag::Act::relu, rng);
    conv3 = ConvBnAct<T>(store, prefix + ".conv3", prefix + ".bn3", width,
                         cout, 1, 1, 1, ag::Act::none, rng);
    if (stride != 1 || cin != cout) {
      downsample = ConvBnAct<T>(store, prefix + ".downsample.conv",
                                prefix + ".downsample.bn", cin, cout, 1,
                                stride, 1, ag::Act::none, rng);
      has_downsample = true;
    }
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    flops::ScopeGuard scope(name);
    auto h = conv1.forward(x, training);
    h = conv2.forward(h, training);
    h = conv3.forward(h, training);
    auto shortcut = has_downsample ? downsample.forward(x, training) : x;
    return ag::relu(ag::add(h, shortcut));
  }
};

/// Two-layer MLP head used for contrastive projections and predictors.
template <typename T>
struct MlpHead {
  ag::Var<T> w1, b1, w2, b2;
  int64_t out_dim = 0;

  MlpHead() = default;

  MlpHead(ParamStore<T>& store, const std::string& prefix, int64_t din,
          int64_t hidden, int64_t dout, Rng& rng)
      : out_dim(dout) {
    w1 = store.add_param(prefix + ".fc1.weight", linear_init<T>(hidden, din, rng));
    b1 = store.add_param(prefix + ".fc1.bias", Tensor<T>::zeros({hidden}), true);
    w2 = store.add_param(prefix + ".fc2.weight", linear_init<T>(dout, hidden, rng));
    b2 = store.add_param(prefix + ".fc2.bias", Tensor<T>::zeros({dout}), true);
  }

  ag::Var<T> forward(const ag::Var<T>& x) {
    return ag::linear(ag::relu(ag::linear(x, w1, b1)), w2, b2);
  }
};

}  // namespace assl::nn
