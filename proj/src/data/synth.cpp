#include "assl/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "assl/data/image_io.hpp"
#include "assl/data/manifest.hpp"

namespace fs = std::filesystem;

namespace assl::data {

namespace {

struct RoofPrimitive {
  double cx, cy;        // center in pixels
  double half_len;      // along the ridge axis
  double half_wid;      // across the ridge axis
  double angle;         // ridge orientation
  int style;            // 0 = flat, 1 = gable, 2 = hip
  double tones[4];      // facet albedos (N/S/E/W order for hip)
};

/// Facet albedo lookup for a point in the primitive's frame; returns -1
/// outside the footprint.
double facet_tone(const RoofPrimitive& roof, double px, double py) {
  const double dx = px - roof.cx, dy = py - roof.cy;
  const double ca = std::cos(roof.angle), sa = std::sin(roof.angle);
  const double u = dx * ca + dy * sa;   // along ridge
  const double v = -dx * sa + dy * ca;  // across ridge
  if (std::abs(u) > roof.half_len || std::abs(v) > roof.half_wid) return -1.0;
  switch (roof.style) {
    case 0:
      return roof.tones[0];
    case 1:
      return v >= 0 ? roof.tones[0] : roof.tones[1];
    default: {
      const double ridge = std::max(0.0, roof.half_len - roof.half_wid);
      if (u - ridge >= std::abs(v)) return roof.tones[2];   // east triangle
      if (-u - ridge >= std::abs(v)) return roof.tones[3];  // west triangle
      return v >= 0 ? roof.tones[0] : roof.tones[1];
    }
  }
}

RoofPrimitive sample_primitive(Rng& rng, double cx, double cy, double max_half,
                               int style) {
  RoofPrimitive roof;
  roof.cx = cx;
  roof.cy = cy;
  roof.half_len = max_half * rng.uniform(0.7, 1.0);
  roof.half_wid = roof.half_len * rng.uniform(0.45, 0.8);
  roof.angle = rng.uniform(0.0, M_PI);
  roof.style = style;
  double base = rng.uniform(0.4, 0.7);
  double delta = rng.uniform(0.12, 0.25);
  // Facet shading from an arbitrary sun azimuth; guarantees distinct tones
  // on opposite slopes.
  double sun = rng.uniform(0.0, 2 * M_PI);
  roof.tones[0] = std::clamp(base + delta * std::cos(sun), 0.1, 0.95);
  roof.tones[1] = std::clamp(base - delta * std::cos(sun), 0.1, 0.95);
  roof.tones[2] = std::clamp(base + delta * std::sin(sun), 0.1, 0.95);
  roof.tones[3] = std::clamp(base - delta * std::sin(sun), 0.1, 0.95);
  if (style == 1 && std::abs(roof.tones[0] - roof.tones[1]) < 0.12) {
    roof.tones[0] = std::clamp(base + 0.12, 0.1, 0.95);
    roof.tones[1] = std::clamp(base - 0.12, 0.1, 0.95);
  }
  return roof;
}

}  // namespace

ImageRecord synth_roof_sample(RoofClass category, int64_t size, uint64_t seed) {
  if (size < 32) throw std::invalid_argument("synth_roof_sample: size must be >= 32");
  uint64_t stream = detail::splitmix64(
      seed ^ detail::splitmix64(static_cast<uint64_t>(category) * 0x9e37ULL +
                                static_cast<uint64_t>(size)));
  Rng rng(stream);

  const double center = size / 2.0;
  std::vector<RoofPrimitive> prims;
  switch (category) {
    case RoofClass::flat:
      prims.push_back(sample_primitive(rng, center, center, 0.42 * size, 0));
      break;
    case RoofClass::gable:
      prims.push_back(sample_primitive(rng, center, center, 0.42 * size, 1));
      break;
    case RoofClass::hip:
      prims.push_back(sample_primitive(rng, center, center, 0.42 * size, 2));
      break;
    case RoofClass::complex_roof: {
      int64_t parts = 2 + rng.uniform_int(2);
      for (int64_t i = 0; i < parts; ++i) {
        double ox = center + rng.uniform(-0.18, 0.18) * size;
        double oy = center + rng.uniform(-0.18, 0.18) * size;
        int style = rng.bernoulli(0.5) ? 1 : 2;
        prims.push_back(sample_primitive(rng, ox, oy, 0.3 * size, style));
      }
      break;
    }
  }

  // Ground plane with a gentle diagonal gradient, then roofs painted over.
  double ground = rng.uniform(0.25, 0.45);
  double gradient = rng.uniform(-0.06, 0.06);
  double noise_sigma = rng.uniform(0.01, 0.03);

  Image8 img;
  img.height = size;
  img.width = size;
  img.rgb.resize(static_cast<size_t>(size * size * 3));
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      double tone = -1.0;
      for (auto it = prims.rbegin(); it != prims.rend(); ++it) {
        tone = facet_tone(*it, x + 0.5, y + 0.5);
        if (tone >= 0) break;
      }
      double r, g, b;
      if (tone >= 0) {
        r = tone * 1.00;
        g = tone * 0.93;
        b = tone * 0.88;
      } else {
        double t = ground + gradient * (static_cast<double>(x + y) / size - 1.0);
        r = t * 0.72;
        g = t * 0.95;
        b = t * 0.62;
      }
      double n = rng.normal(0.0, noise_sigma);
      auto q = [](double v) {
        return static_cast<uint8_t>(
            std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      };
      img.rgb[(y * size + x) * 3 + 0] = q(r + n);
      img.rgb[(y * size + x) * 3 + 1] = q(g + n);
      img.rgb[(y * size + x) * 3 + 2] = q(b + n);
    }
  }

  ImageRecord rec;
  rec.path = "";
  rec.image = std::move(img);
  rec.label = category;
  return rec;
}

int64_t write_synth_dataset(const std::string& root,
                            const SynthDatasetSpec& spec) {
  fs::create_directories(root);
  DatasetManifest train, val;
  train.root = root;
  val.root = root;
  train.split = "train";
  val.split = "val";
  int64_t written = 0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    RoofClass category = static_cast<RoofClass>(cls);
    std::string sub = to_string(category);
    fs::create_directories(fs::path(root) / sub);
    for (int64_t i = 0; i < spec.per_class_train + spec.per_class_val; ++i) {
      uint64_t sample_seed =
          detail::splitmix64(spec.seed + 1000003ULL * cls + i);
      ImageRecord rec = synth_roof_sample(category, spec.size, sample_seed);
      char name[64];
      std::snprintf(name, sizeof(name), "%s/%s_%04lld.png", sub.c_str(),
                    sub.c_str(), static_cast<long long>(i));
      write_image((fs::path(root) / name).string(), rec.image);
      ManifestEntry entry{name, cls, ""};
      if (i < spec.per_class_train)
        train.entries.push_back(entry);
      else
        val.entries.push_back(entry);
      ++written;
    }
  }
  save_manifest(train, (fs::path(root) / "train.csv").string());
  save_manifest(val, (fs::path(root) / "val.csv").string());
  return written;
}

}  // namespace assl::data
