#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "assl/backbones/extractor.hpp"

namespace assl::profile {

struct LayerCost {
  std::string name;
  int64_t params = 0;
  int64_t flops = 0;
};

/// Analytic compute accounting for one architecture. FLOP convention: one
/// multiply-accumulate counts as one FLOP for convolutions, linear layers
/// and matrix products; normalization, activations, pooling and other
/// elementwise work count one op per output element. Totals equal the sum
/// of the per-layer breakdown exactly.
struct ProfileReport {
  std::string family;
  bool with_cbam = false;
  int64_t resolution = 0;
  int64_t params = 0;
  int64_t flops = 0;       // per image at `resolution`
  int64_t conv_macs = 0;   // multiply-accumulate subset of `flops`
  double seconds_per_iteration = 0;  // 0 when benchmarking was skipped
  int64_t batch_size = 0;
  std::string hardware;
  std::vector<LayerCost> layers;

  nlohmann::json to_json() const;
};

/// Exact parameter enumeration with a per-layer breakdown (keys are block
/// prefixes such as "stem", "stage3.block1", "cbam", "head").
int64_t count_params(const backbones::FeatureExtractor<float>& extractor,
                     std::vector<LayerCost>* breakdown = nullptr);

/// Single-image forward cost at the given resolution, measured by running
/// the instrumented ops, so the count reflects exactly what executes.
int64_t count_flops(backbones::FeatureExtractor<float>& extractor,
                    int64_t resolution, std::vector<LayerCost>* breakdown = nullptr,
                    int64_t* conv_macs = nullptr);

/// Mean wall-clock seconds of forward + backward + optimizer step at the
/// given batch and resolution, after warmup iterations.
double benchmark_iteration(backbones::FeatureExtractor<float>& extractor,
                           int64_t batch_size, int64_t resolution,
                           int64_t iterations, int64_t warmup = 3);

std::string hardware_descriptor();

/// Full report; benchmark runs only when iterations > 0.
ProfileReport profile_model(const backbones::BackboneSpec& spec,
                            int64_t resolution, int64_t batch_size,
                            int64_t iterations);

}  // namespace assl::profile
