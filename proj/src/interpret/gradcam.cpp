#include "assl/interpret/gradcam.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "assl/data/augment.hpp"
#include "assl/data/image_io.hpp"

namespace assl::interpret {

CamHeatmap compute_cam(const ag::Var<float>& fmap, int64_t out_h,
                       int64_t out_w, int64_t batch_index) {
  if (!fmap->grad.defined())
    throw std::logic_error("compute_cam: feature map has no gradient");
  const auto& s = fmap->value.shape();
  const int64_t C = s[1], H = s[2], W = s[3], HW = H * W;
  const int64_t base = batch_index * C * HW;

  // Channel weights: spatially averaged gradients of the target logit.
  std::vector<float> weights(C);
  for (int64_t c = 0; c < C; ++c) {
    double acc = 0;
    for (int64_t i = 0; i < HW; ++i) acc += fmap->grad[base + c * HW + i];
    weights[c] = static_cast<float>(acc / HW);
  }

  Tensor<float> map({1, H, W});
  for (int64_t i = 0; i < HW; ++i) {
    double acc = 0;
    for (int64_t c = 0; c < C; ++c)
      acc += weights[c] * fmap->value[base + c * HW + i];
    map[i] = acc > 0 ? static_cast<float>(acc) : 0.0f;  // ReLU
  }

  // Upsample on a 3-channel carrier, then min-max normalize.
  Tensor<float> carrier({3, H, W});
  std::memcpy(carrier.data(), map.data(), sizeof(float) * HW);
  std::memcpy(carrier.data() + HW, map.data(), sizeof(float) * HW);
  std::memcpy(carrier.data() + 2 * HW, map.data(), sizeof(float) * HW);
  Tensor<float> up = data::bilinear_resize(carrier, out_h, out_w);

  CamHeatmap heatmap;
  heatmap.values = Tensor<float>({out_h, out_w});
  float lo = up[0], hi = up[0];
  for (int64_t i = 0; i < out_h * out_w; ++i) {
    lo = std::min(lo, up[i]);
    hi = std::max(hi, up[i]);
  }
  if (hi - lo < 1e-12f) {
    heatmap.degenerate = true;  // all-zero (or constant) signal stays zero
    heatmap.values.fill(0.0f);
  } else {
    for (int64_t i = 0; i < out_h * out_w; ++i)
      heatmap.values[i] = (up[i] - lo) / (hi - lo);
  }
  return heatmap;
}

CamHeatmap grad_cam(backbones::FeatureExtractor<float>& backbone,
                    const eval::LinearHead& head,
                    const data::ImageRecord& record,
                    const train::RunSnapshot& snap, int target) {
  if (target < 0 || target > 3)
    throw std::invalid_argument("grad_cam: target category out of range");
  if (head.embedding_dim() != backbone.embedding_dim())
    throw std::invalid_argument(
        "grad_cam: head and backbone dimensions do not match");

  const int64_t r = snap.backbone.input_resolution;
  auto img = data::bilinear_resize(data::to_float(record.image), r, r);
  img = data::normalize_image(img, snap.norm_mean, snap.norm_std);
  Tensor<float> batch({1, 3, r, r});
  std::memcpy(batch.data(), img.data(), sizeof(float) * img.size());

  auto fwd = backbone.forward(batch, /*training=*/false, /*want_taps=*/true);
  ag::Var<float> tap;
  for (const auto& [name, v] : fwd.taps)
    if (name == "features") tap = v;
  if (!tap) throw std::logic_error("grad_cam: missing features tap");
  tap->retain = true;

  auto logits = ag::linear<float>(fwd.embedding, ag::constant(head.weight),
                                  ag::constant(head.bias));
  auto logit = ag::select_entry(logits, 0, target);
  ag::backward(logit);
  if (!tap->grad.defined()) {
    // Gradient never reached the tap; treat as a degenerate (zero) signal.
    tap->ensure_grad();
  }

  const int64_t ih = record.image.height, iw = record.image.width;
  CamHeatmap heatmap = compute_cam(tap, ih, iw);
  heatmap.layer = "features";
  heatmap.target = target;
  backbone.params().zero_grad();
  return heatmap;
}

std::array<uint8_t, 3> jet_color(float v) {
  auto channel = [](double x) {
    double c = 1.5 - std::abs(x);
    c = std::min(1.0, std::max(0.0, c));
    return static_cast<uint8_t>(std::lround(255.0 * c));
  };
  return {channel(4.0 * v - 3.0), channel(4.0 * v - 2.0),
          channel(4.0 * v - 1.0)};
}

data::Image8 render_overlay(const CamHeatmap& heatmap,
                            const data::Image8& image, double alpha) {
  if (alpha < 0 || alpha > 1)
    throw std::invalid_argument("render_overlay: alpha must be in [0,1]");
  if (heatmap.values.dim(0) != image.height ||
      heatmap.values.dim(1) != image.width)
    throw std::invalid_argument("render_overlay: heatmap " +
                                heatmap.values.shape_str() +
                                " does not match the image size");
  data::Image8 out;
  out.height = image.height;
  out.width = image.width;
  out.rgb.resize(image.rgb.size());
  for (int64_t y = 0; y < image.height; ++y)
    for (int64_t x = 0; x < image.width; ++x) {
      auto color = jet_color(heatmap.values[y * image.width + x]);
      for (int c = 0; c < 3; ++c) {
        double blended = (1.0 - alpha) * image.at(y, x, c) + alpha * color[c];
        out.at(y, x, c) = static_cast<uint8_t>(std::lround(blended));
      }
    }
  return out;
}

void write_cam_artifacts(const CamHeatmap& heatmap, const data::Image8& image,
                         double alpha, const std::string& png_path) {
  data::write_image(png_path, render_overlay(heatmap, image, alpha));
  nlohmann::json sidecar{{"layer", heatmap.layer},
                         {"target", heatmap.target},
                         {"degenerate", heatmap.degenerate}};
  std::ofstream out(png_path + ".json");
  if (!out)
    throw std::runtime_error("write_cam_artifacts: cannot write sidecar for " +
                             png_path);
  out << sidecar.dump(2) << "\n";
}

}  // namespace assl::interpret
