#pragma once

#include <array>
#include <utility>

#include "assl/core/rng.hpp"
#include "assl/core/tensor.hpp"
#include "assl/data/types.hpp"

namespace assl::data {

/// Channel-major [3,H,W] float image in [0,1].
Tensor<float> to_float(const Image8& image);

/// Back to 8-bit RGB with rounding and clamping.
Image8 to_image8(const Tensor<float>& img);

/// out[c] = (pixels[c]/255 - mean[c]) / std[c]; std components must be > 0.
Tensor<float> decode_and_normalize(const ImageRecord& record,
                                   const std::array<float, 3>& mean,
                                   const std::array<float, 3>& stddev);

/// Inverse of the normalization (recovers pixels/255).
Tensor<float> unnormalize(const Tensor<float>& img,
                          const std::array<float, 3>& mean,
                          const std::array<float, 3>& stddev);

Tensor<float> normalize_image(const Tensor<float>& img,
                              const std::array<float, 3>& mean,
                              const std::array<float, 3>& stddev);

/// Bilinear resample (half-pixel centers).
Tensor<float> bilinear_resize(const Tensor<float>& img, int64_t out_h,
                              int64_t out_w);

struct CropBox {
  int64_t y = 0, x = 0, h = 0, w = 0;
};

/// Samples the crop window: area fraction uniform in [scale_lo, scale_hi],
/// aspect log-uniform in the given range, position uniform. After ten
/// attempts that do not fit, falls back to the largest centered box with a
/// clamped aspect.
CropBox sample_crop_box(int64_t height, int64_t width, double scale_lo,
                        double scale_hi, double aspect_lo, double aspect_hi,
                        Rng& rng);

/// Area-and-aspect sampled crop (sample_crop_box) bilinearly resized to
/// out_size.
Tensor<float> random_resized_crop(const Tensor<float>& img, int64_t out_h,
                                  int64_t out_w, double scale_lo,
                                  double scale_hi, double aspect_lo,
                                  double aspect_hi, Rng& rng);

/// Exact column reversal with probability p.
Tensor<float> horizontal_flip(const Tensor<float>& img, double p, Rng& rng);

/// The standard contrastive recipe, all pieces seedable.
struct AugmentRecipe {
  int64_t out_size = 224;
  double crop_scale_lo = 0.2, crop_scale_hi = 1.0;
  double aspect_lo = 3.0 / 4.0, aspect_hi = 4.0 / 3.0;
  double flip_p = 0.5;
  double jitter_p = 0.8;
  double brightness = 0.4, contrast = 0.4, saturation = 0.4, hue = 0.1;
  double grayscale_p = 0.2;
  double blur_p = 0.5;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;

  static AugmentRecipe identity(int64_t out_size) {
    AugmentRecipe r;
    r.out_size = out_size;
    r.crop_scale_lo = r.crop_scale_hi = 1.0;
    r.aspect_lo = r.aspect_hi = 1.0;
    r.flip_p = 0;
    r.jitter_p = 0;
    r.grayscale_p = 0;
    r.blur_p = 0;
    return r;
  }

  /// Crops and flips only, for the linear-evaluation phase.
  static AugmentRecipe eval_train(int64_t out_size) {
    AugmentRecipe r;
    r.out_size = out_size;
    r.jitter_p = 0;
    r.grayscale_p = 0;
    r.blur_p = 0;
    return r;
  }
};

/// Brightness/contrast/saturation/hue jitter on [0,1] RGB with factors drawn
/// from the recipe strengths, applied in that fixed order.
Tensor<float> color_jitter(const Tensor<float>& img, double brightness,
                           double contrast, double saturation, double hue,
                           Rng& rng);

Tensor<float> to_grayscale3(const Tensor<float>& img);

/// Separable gaussian blur; kernel side is the odd value nearest to 10% of
/// the image's short side (at least 3), replicate padding.
Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma);

/// Applies the full recipe with one RNG stream.
Tensor<float> augment_view(const Tensor<float>& img, const AugmentRecipe& recipe,
                           Rng& rng);

/// Two independently augmented views of one image; streams derive from
/// (seed, branch index) so the pair replays exactly.
std::pair<Tensor<float>, Tensor<float>> simclr_view_pair(
    const Tensor<float>& img, const AugmentRecipe& recipe,
    const AugmentationSeed& seed);

}  // namespace assl::data
