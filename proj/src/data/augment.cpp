#include "assl/data/augment.hpp"

#include <algorithm>
#include <cmath>

namespace assl::data {

namespace {

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

// Rec.601 luma, the usual grayscale weights.
inline float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

}  // namespace

Tensor<float> to_float(const Image8& image) {
  const int64_t H = image.height, W = image.width;
  Tensor<float> out({3, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out[(c * H + y) * W + x] =
            static_cast<float>(image.rgb[(y * W + x) * 3 + c]) / 255.0f;
  return out;
}

Image8 to_image8(const Tensor<float>& img) {
  const int64_t H = img.dim(1), W = img.dim(2);
  Image8 out;
  out.height = H;
  out.width = W;
  out.rgb.resize(static_cast<size_t>(H * W * 3));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        float v = clamp01(img[(c * H + y) * W + x]);
        out.rgb[(y * W + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  return out;
}

Tensor<float> normalize_image(const Tensor<float>& img,
                              const std::array<float, 3>& mean,
                              const std::array<float, 3>& stddev) {
  for (float s : stddev)
    if (s <= 0) throw std::invalid_argument("normalize: std components must be > 0");
  const int64_t HW = img.dim(1) * img.dim(2);
  Tensor<float> out(img.shape());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < HW; ++i)
      out[c * HW + i] = (img[c * HW + i] - mean[c]) / stddev[c];
  return out;
}

Tensor<float> decode_and_normalize(const ImageRecord& record,
                                   const std::array<float, 3>& mean,
                                   const std::array<float, 3>& stddev) {
  return normalize_image(to_float(record.image), mean, stddev);
}

Tensor<float> unnormalize(const Tensor<float>& img,
                          const std::array<float, 3>& mean,
                          const std::array<float, 3>& stddev) {
  const int64_t HW = img.dim(1) * img.dim(2);
  Tensor<float> out(img.shape());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < HW; ++i)
      out[c * HW + i] = img[c * HW + i] * stddev[c] + mean[c];
  return out;
}

Tensor<float> bilinear_resize(const Tensor<float>& img, int64_t out_h,
                              int64_t out_w) {
  const int64_t H = img.dim(1), W = img.dim(2);
  if (out_h == H && out_w == W) return img.clone();
  Tensor<float> out({3, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (int64_t oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - y0;
    int64_t y0c = std::clamp<int64_t>(y0, 0, H - 1);
    int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, H - 1);
    for (int64_t ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - x0;
      int64_t x0c = std::clamp<int64_t>(x0, 0, W - 1);
      int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, W - 1);
      for (int64_t c = 0; c < 3; ++c) {
        const float* plane = img.data() + c * H * W;
        double top = plane[y0c * W + x0c] * (1 - wx) + plane[y0c * W + x1c] * wx;
        double bot = plane[y1c * W + x0c] * (1 - wx) + plane[y1c * W + x1c] * wx;
        out[(c * out_h + oy) * out_w + ox] =
            static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

namespace {

Tensor<float> crop(const Tensor<float>& img, int64_t y, int64_t x, int64_t h,
                   int64_t w) {
  const int64_t H = img.dim(1), W = img.dim(2);
  Tensor<float> out({3, h, w});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < h; ++i)
      std::copy_n(img.data() + (c * H + y + i) * W + x, w,
                  out.data() + (c * h + i) * w);
  return out;
}

}  // namespace

CropBox sample_crop_box(int64_t height, int64_t width, double scale_lo,
                        double scale_hi, double aspect_lo, double aspect_hi,
                        Rng& rng) {
  if (!(scale_lo > 0 && scale_lo <= scale_hi && scale_hi <= 1.0))
    throw std::invalid_argument("sample_crop_box: need 0 < lo <= hi <= 1");
  const double area = static_cast<double>(height * width);
  for (int attempt = 0; attempt < 10; ++attempt) {
    double target = area * rng.uniform(scale_lo, scale_hi);
    double log_ratio = rng.uniform(std::log(aspect_lo), std::log(aspect_hi));
    double ratio = std::exp(log_ratio);
    int64_t cw = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
    int64_t ch = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
    if (cw < 1 || ch < 1 || cw > width || ch > height) continue;
    int64_t y = rng.uniform_int(height - ch + 1);
    int64_t x = rng.uniform_int(width - cw + 1);
    return {y, x, ch, cw};
  }
  // Fallback: largest centered crop with clamped aspect.
  double ratio =
      std::clamp(static_cast<double>(width) / height, aspect_lo, aspect_hi);
  int64_t cw = width, ch = height;
  if (static_cast<double>(width) / height > ratio)
    cw = static_cast<int64_t>(std::lround(height * ratio));
  else if (static_cast<double>(width) / height < ratio)
    ch = static_cast<int64_t>(std::lround(width / ratio));
  cw = std::clamp<int64_t>(cw, 1, width);
  ch = std::clamp<int64_t>(ch, 1, height);
  return {(height - ch) / 2, (width - cw) / 2, ch, cw};
}

Tensor<float> random_resized_crop(const Tensor<float>& img, int64_t out_h,
                                  int64_t out_w, double scale_lo,
                                  double scale_hi, double aspect_lo,
                                  double aspect_hi, Rng& rng) {
  const int64_t H = img.dim(1), W = img.dim(2);
  CropBox box =
      sample_crop_box(H, W, scale_lo, scale_hi, aspect_lo, aspect_hi, rng);
  return bilinear_resize(crop(img, box.y, box.x, box.h, box.w), out_h, out_w);
}

Tensor<float> horizontal_flip(const Tensor<float>& img, double p, Rng& rng) {
  if (p < 0 || p > 1) throw std::invalid_argument("horizontal_flip: p in [0,1]");
  if (!rng.bernoulli(p)) return img.clone();
  const int64_t H = img.dim(1), W = img.dim(2);
  Tensor<float> out(img.shape());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
  return out;
}

Tensor<float> to_grayscale3(const Tensor<float>& img) {
  const int64_t HW = img.dim(1) * img.dim(2);
  Tensor<float> out(img.shape());
  for (int64_t i = 0; i < HW; ++i) {
    float g = luma(img[i], img[HW + i], img[2 * HW + i]);
    out[i] = out[HW + i] = out[2 * HW + i] = g;
  }
  return out;
}

Tensor<float> color_jitter(const Tensor<float>& img, double brightness,
                           double contrast, double saturation, double hue,
                           Rng& rng) {
  const int64_t HW = img.dim(1) * img.dim(2);
  Tensor<float> out = img.clone();

  if (brightness > 0) {
    float f = static_cast<float>(
        rng.uniform(std::max(0.0, 1.0 - brightness), 1.0 + brightness));
    for (int64_t i = 0; i < out.size(); ++i) out[i] = clamp01(out[i] * f);
  }
  if (contrast > 0) {
    float f = static_cast<float>(
        rng.uniform(std::max(0.0, 1.0 - contrast), 1.0 + contrast));
    double mean_gray = 0;
    for (int64_t i = 0; i < HW; ++i)
      mean_gray += luma(out[i], out[HW + i], out[2 * HW + i]);
    float m = static_cast<float>(mean_gray / HW);
    for (int64_t i = 0; i < out.size(); ++i)
      out[i] = clamp01(m + (out[i] - m) * f);
  }
  if (saturation > 0) {
    float f = static_cast<float>(
        rng.uniform(std::max(0.0, 1.0 - saturation), 1.0 + saturation));
    for (int64_t i = 0; i < HW; ++i) {
      float g = luma(out[i], out[HW + i], out[2 * HW + i]);
      out[i] = clamp01(g + (out[i] - g) * f);
      out[HW + i] = clamp01(g + (out[HW + i] - g) * f);
      out[2 * HW + i] = clamp01(g + (out[2 * HW + i] - g) * f);
    }
  }
  if (hue > 0) {
    // Shift in HSV space by delta turns.
    float delta = static_cast<float>(rng.uniform(-hue, hue));
    for (int64_t i = 0; i < HW; ++i) {
      float r = out[i], g = out[HW + i], b = out[2 * HW + i];
      float mx = std::max({r, g, b}), mn = std::min({r, g, b});
      float c = mx - mn;
      float h = 0;
      if (c > 0) {
        if (mx == r)
          h = std::fmod((g - b) / c, 6.0f);
        else if (mx == g)
          h = (b - r) / c + 2.0f;
        else
          h = (r - g) / c + 4.0f;
        h /= 6.0f;
      }
      h = h + delta;
      h = h - std::floor(h);
      float hh = h * 6.0f;
      int sector = static_cast<int>(hh) % 6;
      float frac = hh - static_cast<float>(sector);
      float p = mn;
      float q = mx - c * frac;
      float t = mn + c * frac;
      float nr, ng, nb;
      switch (sector) {
        case 0: nr = mx; ng = t; nb = p; break;
        case 1: nr = q; ng = mx; nb = p; break;
        case 2: nr = p; ng = mx; nb = t; break;
        case 3: nr = p; ng = q; nb = mx; break;
        case 4: nr = t; ng = p; nb = mx; break;
        default: nr = mx; ng = p; nb = q; break;
      }
      out[i] = nr;
      out[HW + i] = ng;
      out[2 * HW + i] = nb;
    }
  }
  return out;
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
  const int64_t H = img.dim(1), W = img.dim(2);
  int64_t k = static_cast<int64_t>(std::lround(0.1 * std::min(H, W)));
  if (k % 2 == 0) ++k;
  k = std::max<int64_t>(3, k);
  const int64_t r = k / 2;
  std::vector<float> kernel(static_cast<size_t>(k));
  double sum = 0;
  for (int64_t i = 0; i < k; ++i) {
    double x = static_cast<double>(i - r);
    kernel[i] = static_cast<float>(std::exp(-x * x / (2 * sigma * sigma)));
    sum += kernel[i];
  }
  for (auto& v : kernel) v = static_cast<float>(v / sum);

  Tensor<float> tmp(img.shape());
  Tensor<float> out(img.shape());
  for (int64_t c = 0; c < 3; ++c) {
    const float* src = img.data() + c * H * W;
    float* mid = tmp.data() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        float acc = 0;
        for (int64_t i = -r; i <= r; ++i) {
          int64_t xx = std::clamp<int64_t>(x + i, 0, W - 1);
          acc += src[y * W + xx] * kernel[i + r];
        }
        mid[y * W + x] = acc;
      }
    float* dst = out.data() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        float acc = 0;
        for (int64_t i = -r; i <= r; ++i) {
          int64_t yy = std::clamp<int64_t>(y + i, 0, H - 1);
          acc += mid[yy * W + x] * kernel[i + r];
        }
        dst[y * W + x] = acc;
      }
  }
  return out;
}

Tensor<float> augment_view(const Tensor<float>& img,
                           const AugmentRecipe& recipe, Rng& rng) {
  Tensor<float> view = random_resized_crop(
      img, recipe.out_size, recipe.out_size, recipe.crop_scale_lo,
      recipe.crop_scale_hi, recipe.aspect_lo, recipe.aspect_hi, rng);
  view = horizontal_flip(view, recipe.flip_p, rng);
  if (recipe.jitter_p > 0 && rng.bernoulli(recipe.jitter_p))
    view = color_jitter(view, recipe.brightness, recipe.contrast,
                        recipe.saturation, recipe.hue, rng);
  if (recipe.grayscale_p > 0 && rng.bernoulli(recipe.grayscale_p))
    view = to_grayscale3(view);
  if (recipe.blur_p > 0 && rng.bernoulli(recipe.blur_p))
    view = gaussian_blur(view, rng.uniform(recipe.blur_sigma_lo, recipe.blur_sigma_hi));
  return view;
}

std::pair<Tensor<float>, Tensor<float>> simclr_view_pair(
    const Tensor<float>& img, const AugmentRecipe& recipe,
    const AugmentationSeed& seed) {
  Rng rng1(seed, /*branch=*/1);
  Rng rng2(seed, /*branch=*/2);
  return {augment_view(img, recipe, rng1), augment_view(img, recipe, rng2)};
}

}  // namespace assl::data
