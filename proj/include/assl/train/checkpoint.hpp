#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "assl/train/config_json.hpp"

namespace assl::train {

/// Serialized model state: the contract between pretraining and evaluation.
///
/// On disk: magic "ASSL", a version byte, an 8-byte little-endian header
/// length, then a UTF-8 JSON header whose keys are array names mapping to
/// {dtype, shape, offset, nbytes}, plus the reserved keys "config" (the run
/// snapshot), "epoch", and "loss_history". Raw little-endian array payloads
/// follow, at offsets relative to the end of the header.
struct Checkpoint {
  struct Array {
    std::string name;
    std::string dtype;  // "f32" | "f64"
    std::vector<int64_t> shape;
    std::vector<unsigned char> bytes;

    int64_t element_count() const {
      int64_t n = 1;
      for (int64_t d : shape) n *= d;
      return n;
    }
  };

  uint8_t version = 1;
  RunSnapshot config;
  int64_t epoch = 0;
  std::vector<double> loss_history;
  std::vector<Array> arrays;

  const Array* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }

  void add_array_f32(const std::string& name, const Tensor<float>& t);
  Tensor<float> get_f32(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

/// Writes store contents (parameters then buffers) under `prefix.`.
void pack_store(Checkpoint& ckpt, const std::string& prefix,
                const nn::ParamStore<float>& store);

/// Restores every `prefix.`-named array into the store. Missing arrays,
/// shape mismatches, and checkpoint arrays left unclaimed under the prefix
/// are fatal, each naming the offending parameter. When several stores share
/// one prefix, pass a shared `claimed` set and finish with
/// check_unclaimed().
void unpack_store(const Checkpoint& ckpt, const std::string& prefix,
                  nn::ParamStore<float>& store,
                  std::set<std::string>* claimed = nullptr);

void check_unclaimed(const Checkpoint& ckpt, const std::string& prefix,
                     const std::set<std::string>& claimed);

}  // namespace assl::train
