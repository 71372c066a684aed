#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "assl/attention/cbam.hpp"
#include "assl/nn/layers.hpp"

namespace assl::backbones {

enum class Family {
  resnet34,
  resnet50,
  effnet_b0,
  effnet_b1,
  effnet_b2,
  effnet_b3,
};

inline Family family_from_string(const std::string& s) {
  if (s == "resnet34") return Family::resnet34;
  if (s == "resnet50") return Family::resnet50;
  if (s == "effnet-b0") return Family::effnet_b0;
  if (s == "effnet-b1") return Family::effnet_b1;
  if (s == "effnet-b2") return Family::effnet_b2;
  if (s == "effnet-b3") return Family::effnet_b3;
  throw std::invalid_argument(
      "unknown backbone family '" + s +
      "' (expected one of resnet34, resnet50, effnet-b0, effnet-b1, "
      "effnet-b2, effnet-b3)");
}

inline std::string to_string(Family f) {
  switch (f) {
    case Family::resnet34: return "resnet34";
    case Family::resnet50: return "resnet50";
    case Family::effnet_b0: return "effnet-b0";
    case Family::effnet_b1: return "effnet-b1";
    case Family::effnet_b2: return "effnet-b2";
    case Family::effnet_b3: return "effnet-b3";
  }
  throw std::logic_error("unreachable");
}

inline bool is_efficientnet(Family f) {
  return f == Family::effnet_b0 || f == Family::effnet_b1 ||
         f == Family::effnet_b2 || f == Family::effnet_b3;
}

struct BackboneSpec {
  Family family = Family::effnet_b0;
  bool with_cbam = false;
  attention::CbamSpec cbam;
  int64_t input_resolution = 224;

  void validate() const {
    if (input_resolution < 32)
      throw std::invalid_argument("backbone: input resolution must be >= 32");
    if (with_cbam) cbam.validate();
  }
};

/// Width scaling with the standard divisor-8 rounding (never rounding a
/// channel count down by more than 10%).
inline int64_t round_channels(int64_t channels, double width) {
  if (width == 1.0) return channels;
  const int64_t divisor = 8;
  double scaled = channels * width;
  int64_t rounded =
      std::max<int64_t>(divisor, (static_cast<int64_t>(scaled + divisor / 2.0) /
                                  divisor) * divisor);
  if (static_cast<double>(rounded) < 0.9 * scaled) rounded += divisor;
  return rounded;
}

inline int64_t round_repeats(int64_t repeats, double depth) {
  return static_cast<int64_t>(std::ceil(depth * repeats));
}

struct EffnetScaling {
  double width = 1.0;
  double depth = 1.0;
  int64_t native_resolution = 224;
};

inline EffnetScaling effnet_scaling(Family f) {
  switch (f) {
    case Family::effnet_b0: return {1.0, 1.0, 224};
    case Family::effnet_b1: return {1.0, 1.1, 240};
    case Family::effnet_b2: return {1.1, 1.2, 260};
    case Family::effnet_b3: return {1.2, 1.4, 300};
    default:
      throw std::invalid_argument("effnet_scaling: not an EfficientNet family");
  }
}

/// One row of the base (B0) stage table.
struct MBStageDef {
  int64_t expansion, channels, repeats, stride, kernel;
};

inline const std::vector<MBStageDef>& effnet_b0_stages() {
  static const std::vector<MBStageDef> defs = {
      {1, 16, 1, 1, 3}, {6, 24, 2, 2, 3},  {6, 40, 2, 2, 5},
      {6, 80, 3, 2, 3}, {6, 112, 3, 1, 5}, {6, 192, 4, 2, 5},
      {6, 320, 1, 1, 3},
  };
  return defs;
}

inline constexpr double kSeRatio = 0.25;

/// A backbone with named parameters, stage tap points, and a pooled
/// embedding. Construction is deterministic given (spec, seed): two builds
/// enumerate identical parameter names, shapes, and initial values.
template <typename T>
class FeatureExtractor {
public:
  struct ForwardResult {
    ag::Var<T> embedding;  // [N, D]
    std::vector<std::pair<std::string, ag::Var<T>>> taps;
  };

  FeatureExtractor(const BackboneSpec& spec, uint64_t init_seed)
      : spec_(spec) {
    spec_.validate();
    Rng rng(detail_seed(init_seed));
    if (is_efficientnet(spec_.family))
      build_efficientnet(rng);
    else
      build_resnet(rng);
  }

  ForwardResult forward(const ag::Var<T>& input, bool training,
                        bool want_taps = false) {
    const auto& s = input->value.shape();
    if (s.size() != 4 || s[1] != 3)
      throw std::invalid_argument("forward: expected Nx3xHxW input");
    if (s[2] < 32 || s[3] < 32)
      throw std::invalid_argument("forward: input resolution must be >= 32");
    if (!all_finite(input->value))
      throw std::runtime_error("forward: non-finite values in input batch");

    ForwardResult result;
    auto tap = [&](const std::string& name, const ag::Var<T>& v) {
      if (want_taps) result.taps.emplace_back(name, v);
    };

    ag::Var<T> h;
    {
      flops::ScopeGuard scope("stem");
      h = stem_.forward(input, training);
      if (has_maxpool_) h = ag::max_pool2d(h, 3, 2, 1);
    }
    tap("stem", h);
    for (size_t si = 0; si < mb_stages_.size(); ++si) {
      for (auto& block : mb_stages_[si]) h = block.forward(h, training);
      tap("stage" + std::to_string(si + 1), h);
    }
    for (size_t si = 0; si < basic_stages_.size(); ++si) {
      for (auto& block : basic_stages_[si]) h = block.forward(h, training);
      tap("stage" + std::to_string(si + 1), h);
    }
    for (size_t si = 0; si < bottleneck_stages_.size(); ++si) {
      for (auto& block : bottleneck_stages_[si]) h = block.forward(h, training);
      tap("stage" + std::to_string(si + 1), h);
    }
    if (has_cbam_) {
      h = cbam_.forward(h);
      tap("cbam", h);
    }
    if (has_head_) {
      flops::ScopeGuard scope("head");
      h = head_.forward(h, training);
    }
    tap("features", h);
    result.embedding = ag::global_avg_pool(h);
    return result;
  }

  /// Convenience wrapper for plain tensor batches.
  ForwardResult forward(const Tensor<T>& batch, bool training,
                        bool want_taps = false) {
    return forward(ag::constant(batch), training, want_taps);
  }

  int64_t embedding_dim() const { return embed_dim_; }
  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }
  const BackboneSpec& spec() const { return spec_; }

  /// Channel count at the CBAM insertion point (last stage output).
  int64_t last_stage_channels() const { return last_stage_channels_; }

private:
  static uint64_t detail_seed(uint64_t seed) {
    // Distinct stream per component so heads seeded from the same root
    // do not replay backbone draws.
    return assl::detail::splitmix64(seed ^ 0xb0b0cafeULL);
  }

  void build_efficientnet(Rng& rng) {
    const auto scaling = effnet_scaling(spec_.family);
    const int64_t stem_ch = round_channels(32, scaling.width);
    stem_ = nn::ConvBnAct<T>(store_, "stem.conv", "stem.bn", 3, stem_ch, 3, 2,
                             1, ag::Act::swish, rng);
    int64_t cin = stem_ch;
    const auto& base = effnet_b0_stages();
    mb_stages_.resize(base.size());
    for (size_t si = 0; si < base.size(); ++si) {
      const auto& def = base[si];
      const int64_t cout = round_channels(def.channels, scaling.width);
      const int64_t repeats = round_repeats(def.repeats, scaling.depth);
      for (int64_t bi = 0; bi < repeats; ++bi) {
        std::string prefix =
            "stage" + std::to_string(si + 1) + ".block" + std::to_string(bi);
        mb_stages_[si].emplace_back(store_, prefix, cin, cout, def.kernel,
                                    bi == 0 ? def.stride : 1, def.expansion,
                                    kSeRatio, rng);
        cin = cout;
      }
    }
    last_stage_channels_ = cin;
    if (spec_.with_cbam) {
      cbam_ = attention::CbamBlock<T>(store_, "cbam", cin, spec_.cbam, rng);
      has_cbam_ = true;
    }
    const int64_t head_ch = round_channels(1280, scaling.width);
    head_ = nn::ConvBnAct<T>(store_, "head.conv", "head.bn", cin, head_ch, 1,
                             1, 1, ag::Act::swish, rng);
    has_head_ = true;
    embed_dim_ = head_ch;
  }

  void build_resnet(Rng& rng) {
    stem_ = nn::ConvBnAct<T>(store_, "stem.conv", "stem.bn", 3, 64, 7, 2, 1,
                             ag::Act::relu, rng);
    has_maxpool_ = true;
    const std::vector<int64_t> counts = {3, 4, 6, 3};
    const std::vector<int64_t> widths = {64, 128, 256, 512};
    int64_t cin = 64;
    if (spec_.family == Family::resnet34) {
      basic_stages_.resize(4);
      for (size_t si = 0; si < 4; ++si) {
        for (int64_t bi = 0; bi < counts[si]; ++bi) {
          std::string prefix =
              "stage" + std::to_string(si + 1) + ".block" + std::to_string(bi);
          basic_stages_[si].emplace_back(store_, prefix, cin, widths[si],
                                         (bi == 0 && si > 0) ? 2 : 1, rng);
          cin = widths[si];
        }
      }
    } else {
      bottleneck_stages_.resize(4);
      for (size_t si = 0; si < 4; ++si) {
        for (int64_t bi = 0; bi < counts[si]; ++bi) {
          std::string prefix =
              "stage" + std::to_string(si + 1) + ".block" + std::to_string(bi);
          bottleneck_stages_[si].emplace_back(store_, prefix, cin, widths[si],
                                              (bi == 0 && si > 0) ? 2 : 1, rng);
          cin = widths[si] * 4;
        }
      }
    }
    last_stage_channels_ = cin;
    if (spec_.with_cbam) {
      cbam_ = attention::CbamBlock<T>(store_, "cbam", cin, spec_.cbam, rng);
      has_cbam_ = true;
    }
    embed_dim_ = cin;
  }

  BackboneSpec spec_;
  nn::ParamStore<T> store_;
  nn::ConvBnAct<T> stem_;
  bool has_maxpool_ = false;
  std::vector<std::vector<nn::MBConvBlock<T>>> mb_stages_;
  std::vector<std::vector<nn::BasicBlock<T>>> basic_stages_;
  std::vector<std::vector<nn::BottleneckBlock<T>>> bottleneck_stages_;
  attention::CbamBlock<T> cbam_;
  bool has_cbam_ = false;
  nn::ConvBnAct<T> head_;
  bool has_head_ = false;
  int64_t embed_dim_ = 0;
  int64_t last_stage_channels_ = 0;
};

}  // namespace assl::backbones
