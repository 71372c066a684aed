#pragma once

#include <memory>
#include <string>
#include <vector>

#include "assl/data/manifest.hpp"
#include "assl/train/checkpoint.hpp"

namespace assl::train {

/// Stream identity for one augmentation draw; pure in all three fields and
/// independent of data-loader worker layout.
inline AugmentationSeed derive_sample_seed(uint64_t global_seed, int64_t epoch,
                                           int64_t index) {
  return AugmentationSeed{global_seed, epoch, index};
}

/// The trainable pieces of one pretraining run. The momentum branch exists
/// only for the momentum-contrastive method; prototypes only for the
/// clustering method.
struct SslModel {
  ssl::Method method = ssl::Method::simclr;
  std::unique_ptr<backbones::FeatureExtractor<float>> backbone;
  nn::ParamStore<float> heads;            // projection head (+ prototypes)
  nn::ParamStore<float> predictor_store;  // query-only predictor (mocov3)
  nn::MlpHead<float> proj;
  nn::MlpHead<float> predictor;
  ag::Var<float> prototypes;
  std::unique_ptr<backbones::FeatureExtractor<float>> momentum_backbone;
  nn::ParamStore<float> momentum_heads;
  nn::MlpHead<float> momentum_proj;

  std::vector<nn::ParamStore<float>::Param> trainable_params();
};

SslModel build_ssl_model(const RunSnapshot& snap);

Checkpoint model_to_checkpoint(const SslModel& model, const RunSnapshot& snap,
                               int64_t epoch, std::vector<double> loss_history);
SslModel checkpoint_to_model(const Checkpoint& ckpt);

/// Backbone only, for evaluation and attribution consumers.
std::unique_ptr<backbones::FeatureExtractor<float>> restore_backbone(
    const Checkpoint& ckpt);

// Per-step losses. Views are normalized image batches; `pair_batch` holds 2N
// rows with the two views of sample i at rows 2i and 2i+1.
ag::Var<float> simclr_forward_loss(backbones::FeatureExtractor<float>& backbone,
                                   nn::MlpHead<float>& proj,
                                   const Tensor<float>& pair_batch, double tau,
                                   bool training = true);
ag::Var<float> mocov3_forward_loss(SslModel& model, const Tensor<float>& view1,
                                   const Tensor<float>& view2, double tau,
                                   bool training = true);
ag::Var<float> swav_forward_loss(SslModel& model, const Tensor<float>& view1,
                                 const Tensor<float>& view2,
                                 const ssl::SslConfig& cfg,
                                 bool training = true);

/// Unit-normalizes every prototype row in place.
void renormalize_prototypes(const ag::Var<float>& prototypes);

/// Momentum coefficient ramped from the base toward 1 over the run.
double momentum_at_step(double base, int64_t step, int64_t total_steps);

struct EpochRecord {
  int64_t epoch = 0;
  double mean_loss = 0;
  std::vector<double> lr;
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  void save_ndjson(const std::string& path) const;
};

struct TrainOptions {
  std::string out_dir;     // when set: checkpoints, log, resolved config
  int64_t save_every = 10;  // epochs between intermediate checkpoints
  int64_t workers = 1;      // augmentation threads; results are identical
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Full pretraining loop: epoch shuffling, per-sample seeded view pairs, the
/// method's loss, LARS/SGD with the warmup-cosine schedule, checkpointing.
/// Unlabeled entries are expected; labels are ignored. The schedule's
/// steps_per_epoch/total_epochs are derived here, and a zero base_lr is
/// resolved by the linear scaling rule from the optimizer's reference rate.
TrainResult run_pretraining(const data::DatasetManifest& dataset,
                            RunSnapshot snap, const TrainOptions& opts = {});

}  // namespace assl::train
