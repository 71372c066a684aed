#pragma once

#include <string>

#include "assl/eval/linear_eval.hpp"

namespace assl::interpret {

/// Normalized spatial attribution map for one image and target category.
/// Values sit in [0,1] with max exactly 1 unless the map is degenerate
/// (identically zero gradient signal).
struct CamHeatmap {
  Tensor<float> values;  // H x W
  std::string layer;
  int target = 0;
  bool degenerate = false;
};

/// Core computation given a retained feature-map node and a scalar logit
/// node that has been backpropagated: channel weights are spatially averaged
/// gradients, the map is the ReLU of the weighted channel sum, bilinearly
/// upsampled and min-max normalized.
CamHeatmap compute_cam(const ag::Var<float>& fmap, int64_t out_h,
                       int64_t out_w, int64_t batch_index = 0);

/// Gradient-weighted class activation map over the backbone's final
/// pre-pooling feature map, using the linear head's logit for `target`.
/// `record` is resized to the run resolution and normalized internally.
CamHeatmap grad_cam(backbones::FeatureExtractor<float>& backbone,
                    const eval::LinearHead& head,
                    const data::ImageRecord& record,
                    const train::RunSnapshot& snap, int target);

/// Jet-style colormap blend onto the image: alpha 0 returns the image
/// bytes unchanged, alpha 1 the pure colormap. Sizes must match.
data::Image8 render_overlay(const CamHeatmap& heatmap,
                            const data::Image8& image, double alpha);

/// Fixed colormap used by the overlay, exposed for verification:
/// r = clamp(1.5 - |4v-3|), g = clamp(1.5 - |4v-2|), b = clamp(1.5 - |4v-1|),
/// each scaled to bytes by round(255 * c).
std::array<uint8_t, 3> jet_color(float v);

/// PNG overlay plus a sidecar JSON ({layer, target, degenerate}).
void write_cam_artifacts(const CamHeatmap& heatmap, const data::Image8& image,
                         double alpha, const std::string& png_path);

}  // namespace assl::interpret
