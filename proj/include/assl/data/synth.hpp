#pragma once

#include <string>

#include "assl/core/rng.hpp"
#include "assl/data/types.hpp"

namespace assl::data {

/// Procedurally rendered top-down roof image for desk-scale runs:
/// Flat = single facet, Gable = two facets across a ridge, Hip = four
/// facets, Complex = a union of 2-3 gable/hip primitives. Pose, tones and
/// pixel noise are drawn from (category, size, seed) deterministically.
ImageRecord synth_roof_sample(RoofClass category, int64_t size, uint64_t seed);

/// Renders a balanced dataset under `root` (category subdirectories + train/
/// val manifest CSVs). Returns the number of images written.
struct SynthDatasetSpec {
  int64_t per_class_train = 128;
  int64_t per_class_val = 32;
  int64_t size = 64;
  uint64_t seed = 7;
};

int64_t write_synth_dataset(const std::string& root, const SynthDatasetSpec& spec);

}  // namespace assl::data
