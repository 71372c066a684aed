#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace assl::data {

/// The four target categories, with stable integer codes.
enum class RoofClass : int { gable = 0, hip = 1, flat = 2, complex_roof = 3 };

inline constexpr int kNumClasses = 4;

inline const std::array<std::string, 4>& roof_class_names() {
  static const std::array<std::string, 4> names = {"Gable", "Hip", "Flat",
                                                   "Complex"};
  return names;
}

inline std::string to_string(RoofClass c) {
  return roof_class_names()[static_cast<size_t>(c)];
}

/// Case-insensitive name -> class; nullopt when the string is not a category.
inline std::optional<RoofClass> roof_class_from_string(const std::string& s) {
  auto lower = [](const std::string& in) {
    std::string out = in;
    for (char& c : out) c = static_cast<char>(std::tolower(c));
    return out;
  };
  const std::string needle = lower(s);
  const auto& names = roof_class_names();
  for (int i = 0; i < kNumClasses; ++i)
    if (lower(names[static_cast<size_t>(i)]) == needle)
      return static_cast<RoofClass>(i);
  return std::nullopt;
}

inline RoofClass roof_class_from_code(int code) {
  if (code < 0 || code >= kNumClasses)
    throw std::invalid_argument("invalid roof class code " + std::to_string(code));
  return static_cast<RoofClass>(code);
}

/// Interleaved 8-bit RGB raster.
struct Image8 {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> rgb;  // height*width*3, row-major, RGB

  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return rgb[(y * width + x) * 3 + c];
  }
  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
};

/// One dataset sample: decoded pixels plus an optional label.
struct ImageRecord {
  std::string path;
  Image8 image;
  std::optional<RoofClass> label;
};

/// Checks the record contract (pixels present, both sides >= 32).
inline void validate_record(const ImageRecord& rec) {
  if (rec.image.height < 32 || rec.image.width < 32)
    throw std::invalid_argument("image record '" + rec.path +
                                "': both sides must be >= 32 pixels");
  if (static_cast<int64_t>(rec.image.rgb.size()) !=
      rec.image.height * rec.image.width * 3)
    throw std::invalid_argument("image record '" + rec.path +
                                "': pixel buffer size mismatch");
}

struct ManifestEntry {
  std::string rel_path;
  std::optional<int> label;  // RoofClass code
  std::string tag;           // source subdirectory for non-category layouts
};

/// Listing of a corpus on disk: entries are relative to `root` and keep
/// their file order.
struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
  std::string split = "train";  // train | val | test
  int64_t warnings = 0;         // undecodable files skipped during scanning

  bool fully_labeled() const {
    for (const auto& e : entries)
      if (!e.label) return false;
    return !entries.empty();
  }
};

}  // namespace assl::data
