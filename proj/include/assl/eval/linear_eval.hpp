#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "assl/data/manifest.hpp"
#include "assl/eval/metrics.hpp"
#include "assl/train/trainer.hpp"

namespace assl::eval {

/// Linear classification head over frozen embeddings. Weight layout is
/// [4, D] with D the backbone embedding dimension.
struct LinearHead {
  Tensor<float> weight;
  Tensor<float> bias;

  int64_t embedding_dim() const { return weight.defined() ? weight.dim(1) : 0; }
};

struct LinearEvalOptions {
  int64_t epochs = 100;
  int64_t batch_size = 64;
  uint64_t seed = 0;
  int64_t workers = 1;
};

/// Trains only the head with cross entropy over frozen backbone embeddings;
/// augmentation is limited to random resize crops and horizontal flips. The
/// backbone (parameters and normalization statistics) is byte-frozen, which
/// is asserted before returning. The manifest must be fully labeled.
LinearHead train_linear_head(const train::Checkpoint& ckpt,
                             const data::DatasetManifest& train_manifest,
                             const optim::OptimConfig& opt_cfg,
                             optim::ScheduleConfig sched,
                             const LinearEvalOptions& opts);

struct Prediction {
  int category = -1;  // -1 when the item failed to decode
  std::array<double, 4> probabilities{};
  std::string error;
};

/// Batched class probabilities for decoded records. Softmax rows sum to 1;
/// argmax ties break toward the lowest category code.
std::vector<Prediction> predict(backbones::FeatureExtractor<float>& backbone,
                                const LinearHead& head,
                                const std::vector<data::ImageRecord>& records,
                                const train::RunSnapshot& snap);

/// Path-based convenience: undecodable files produce per-item errors and the
/// run continues.
std::vector<Prediction> predict_paths(
    backbones::FeatureExtractor<float>& backbone, const LinearHead& head,
    const std::vector<std::string>& paths, const train::RunSnapshot& snap);

/// Head training + validation scoring for one seed.
EvalReport evaluate_head(backbones::FeatureExtractor<float>& backbone,
                         const LinearHead& head,
                         const data::DatasetManifest& val_manifest,
                         const train::RunSnapshot& snap, uint64_t seed);

struct LinearEvalResult {
  std::vector<EvalReport> reports;  // one per seed
  RunAggregate aggregate;
  LinearHead head;  // head trained with the first seed
};

/// The full protocol: per-seed head training on the train split, scoring on
/// the validation split, and the mean/std aggregate across seeds.
LinearEvalResult linear_evaluate(const train::Checkpoint& ckpt,
                                 const data::DatasetManifest& train_manifest,
                                 const data::DatasetManifest& val_manifest,
                                 const optim::OptimConfig& opt_cfg,
                                 optim::ScheduleConfig sched,
                                 const std::vector<uint64_t>& seeds,
                                 const LinearEvalOptions& opts);

/// Self-contained prediction artifact: the source checkpoint plus the
/// trained head under `linear_head.*`.
void save_head_checkpoint(const train::Checkpoint& backbone_ckpt,
                          const LinearHead& head, const std::string& path);
LinearHead head_from_checkpoint(const train::Checkpoint& ckpt);

}  // namespace assl::eval
