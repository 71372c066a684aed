#include "assl/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "assl/data/augment.hpp"
#include "assl/data/image_io.hpp"

namespace fs = std::filesystem;

namespace assl::train {

namespace {

uint64_t head_seed(uint64_t seed) {
  return assl::detail::splitmix64(seed ^ 0x4ead5eedULL);
}

uint64_t epoch_perm_seed(uint64_t seed, int64_t epoch) {
  return assl::detail::splitmix64(seed ^ 0x9e59a11eULL ^
                                  static_cast<uint64_t>(epoch) * 0x10001ULL);
}

}  // namespace

std::vector<nn::ParamStore<float>::Param> SslModel::trainable_params() {
  std::vector<nn::ParamStore<float>::Param> all;
  for (const auto& p : backbone->params().params()) all.push_back(p);
  for (const auto& p : heads.params()) all.push_back(p);
  for (const auto& p : predictor_store.params()) all.push_back(p);
  return all;
}

SslModel build_ssl_model(const RunSnapshot& snap) {
  SslModel model;
  model.method = snap.ssl_cfg.method;
  model.backbone = std::make_unique<backbones::FeatureExtractor<float>>(
      snap.backbone, snap.seed);
  Rng rng(head_seed(snap.seed));
  const int64_t dim = model.backbone->embedding_dim();
  model.proj = nn::MlpHead<float>(model.heads, "proj", dim,
                                  snap.ssl_cfg.proj_hidden,
                                  snap.ssl_cfg.proj_out, rng);
  if (model.method == ssl::Method::mocov3) {
    model.predictor = nn::MlpHead<float>(model.predictor_store, "predictor",
                                         snap.ssl_cfg.proj_out,
                                         snap.ssl_cfg.proj_hidden,
                                         snap.ssl_cfg.proj_out, rng);
    // Momentum copies start identical to the online branch.
    model.momentum_backbone =
        std::make_unique<backbones::FeatureExtractor<float>>(snap.backbone,
                                                             snap.seed);
    Rng mrng(head_seed(snap.seed));
    model.momentum_proj =
        nn::MlpHead<float>(model.momentum_heads, "proj", dim,
                           snap.ssl_cfg.proj_hidden, snap.ssl_cfg.proj_out,
                           mrng);
  }
  if (model.method == ssl::Method::swav) {
    model.prototypes = model.heads.add_param(
        "prototypes", nn::normal_init<float>(
                          {snap.ssl_cfg.prototypes, snap.ssl_cfg.proj_out},
                          0.02, rng));
    renormalize_prototypes(model.prototypes);
  }
  return model;
}

Checkpoint model_to_checkpoint(const SslModel& model, const RunSnapshot& snap,
                               int64_t epoch,
                               std::vector<double> loss_history) {
  Checkpoint ckpt;
  ckpt.config = snap;
  ckpt.epoch = epoch;
  ckpt.loss_history = std::move(loss_history);
  pack_store(ckpt, "backbone", model.backbone->params());
  pack_store(ckpt, "heads", model.heads);
  pack_store(ckpt, "heads", model.predictor_store);
  if (model.momentum_backbone) {
    pack_store(ckpt, "momentum.backbone", model.momentum_backbone->params());
    pack_store(ckpt, "momentum.heads", model.momentum_heads);
  }
  return ckpt;
}

SslModel checkpoint_to_model(const Checkpoint& ckpt) {
  SslModel model = build_ssl_model(ckpt.config);
  unpack_store(ckpt, "backbone", model.backbone->params());
  std::set<std::string> claimed;
  unpack_store(ckpt, "heads", model.heads, &claimed);
  unpack_store(ckpt, "heads", model.predictor_store, &claimed);
  check_unclaimed(ckpt, "heads", claimed);
  if (model.momentum_backbone) {
    unpack_store(ckpt, "momentum.backbone", model.momentum_backbone->params());
    unpack_store(ckpt, "momentum.heads", model.momentum_heads);
  }
  return model;
}

std::unique_ptr<backbones::FeatureExtractor<float>> restore_backbone(
    const Checkpoint& ckpt) {
  auto backbone = std::make_unique<backbones::FeatureExtractor<float>>(
      ckpt.config.backbone, ckpt.config.seed);
  unpack_store(ckpt, "backbone", backbone->params());
  return backbone;
}

ag::Var<float> simclr_forward_loss(backbones::FeatureExtractor<float>& backbone,
                                   nn::MlpHead<float>& proj,
                                   const Tensor<float>& pair_batch, double tau,
                                   bool training) {
  auto features = backbone.forward(pair_batch, training);
  auto z = proj.forward(features.embedding);
  return ssl::nt_xent_loss(z, tau);
}

ag::Var<float> mocov3_forward_loss(SslModel& model, const Tensor<float>& view1,
                                   const Tensor<float>& view2, double tau,
                                   bool training) {
  auto query = [&](const Tensor<float>& v) {
    auto h = model.backbone->forward(v, training);
    return model.predictor.forward(model.proj.forward(h.embedding));
  };
  auto key = [&](const Tensor<float>& v) {
    ag::NoGradGuard guard;
    auto h = model.momentum_backbone->forward(v, training);
    return ag::constant(
        model.momentum_proj.forward(h.embedding)->value.clone());
  };
  auto q1 = query(view1);
  auto q2 = query(view2);
  auto k1 = key(view1);
  auto k2 = key(view2);
  auto l12 = ssl::mocov3_loss(q1, k2, tau);
  auto l21 = ssl::mocov3_loss(q2, k1, tau);
  return ag::scale(ag::add(l12, l21), 0.5f);
}

ag::Var<float> swav_forward_loss(SslModel& model, const Tensor<float>& view1,
                                 const Tensor<float>& view2,
                                 const ssl::SslConfig& cfg, bool training) {
  auto embed = [&](const Tensor<float>& v) {
    auto h = model.backbone->forward(v, training);
    return ag::l2_normalize_rows(model.proj.forward(h.embedding));
  };
  auto z1 = embed(view1);
  auto z2 = embed(view2);
  auto scores1 = ag::matmul_nt(z1, model.prototypes);
  auto scores2 = ag::matmul_nt(z2, model.prototypes);
  Tensor<float> codes1 = ssl::sinkhorn_normalize(
      scores1->value, cfg.sinkhorn_iterations, cfg.sinkhorn_epsilon);
  Tensor<float> codes2 = ssl::sinkhorn_normalize(
      scores2->value, cfg.sinkhorn_iterations, cfg.sinkhorn_epsilon);
  auto l1 = ssl::swav_swapped_loss(scores1, codes2, cfg.temperature);
  auto l2 = ssl::swav_swapped_loss(scores2, codes1, cfg.temperature);
  return ag::scale(ag::add(l1, l2), 0.5f);
}

void renormalize_prototypes(const ag::Var<float>& prototypes) {
  auto& t = prototypes->value;
  const int64_t K = t.dim(0), D = t.dim(1);
  for (int64_t k = 0; k < K; ++k) {
    double norm = 0;
    for (int64_t j = 0; j < D; ++j) norm += double(t.at(k, j)) * t.at(k, j);
    float inv = static_cast<float>(1.0 / std::max(std::sqrt(norm), 1e-12));
    for (int64_t j = 0; j < D; ++j) t.at(k, j) *= inv;
  }
}

double momentum_at_step(double base, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return base;
  double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - base) * (std::cos(M_PI * t) + 1.0) / 2.0;
}

void TrainLog::save_ndjson(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("train log: cannot write " + path);
  for (const auto& e : epochs) {
    json rec{{"epoch", e.epoch},
             {"mean_loss", e.mean_loss},
             {"lr", e.lr},
             {"seconds", e.seconds}};
    out << rec.dump() << "\n";
  }
}

TrainResult run_pretraining(const data::DatasetManifest& dataset,
                            RunSnapshot snap, const TrainOptions& opts) {
  if (dataset.entries.empty())
    throw std::invalid_argument("run_pretraining: dataset is empty");
  snap.ssl_cfg.validate();
  snap.optimizer.validate();

  const int64_t n = static_cast<int64_t>(dataset.entries.size());
  const int64_t batch = snap.ssl_cfg.batch_size;
  const int64_t epochs = snap.ssl_cfg.epochs;
  const int64_t steps_per_epoch = n / batch;  // last incomplete batch dropped
  if (epochs > 0 && steps_per_epoch == 0)
    throw std::invalid_argument(
        "run_pretraining: dataset smaller than one batch (" +
        std::to_string(n) + " < " + std::to_string(batch) + ")");

  // Resolve the schedule against this run.
  snap.schedule.total_epochs = std::max<int64_t>(epochs, 1);
  snap.schedule.steps_per_epoch = std::max<int64_t>(steps_per_epoch, 1);
  if (snap.schedule.base_lr <= 0)
    snap.schedule.base_lr = optim::linear_scaled_lr(snap.optimizer.base_lr, batch);
  if (snap.schedule.warmup_epochs >= snap.schedule.total_epochs)
    snap.schedule.warmup_epochs = snap.schedule.total_epochs - 1;
  snap.recipe.out_size = snap.backbone.input_resolution;

  SslModel model = build_ssl_model(snap);
  optim::Optimizer<float> opt(snap.optimizer, model.trainable_params());

  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    std::ofstream cfg(fs::path(opts.out_dir) / "config.json");
    cfg << to_json(snap).dump(2) << "\n";
  }

  // Decode the corpus once; augmentation happens per step from these.
  std::vector<data::Image8> images;
  images.reserve(dataset.entries.size());
  for (const auto& entry : dataset.entries) {
    auto img = data::decode_image(
        (fs::path(dataset.root) / entry.rel_path).string());
    if (!img)
      throw std::runtime_error("run_pretraining: cannot decode " +
                               entry.rel_path);
    images.push_back(std::move(*img));
  }

  TrainLog log;
  std::vector<double> loss_history;
  const int64_t total_steps = epochs * steps_per_epoch;
  const int64_t r = snap.backbone.input_resolution;
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    Rng perm_rng(epoch_perm_seed(snap.seed, epoch));
    perm_rng.shuffle(order);

    EpochRecord record;
    record.epoch = epoch;
    double loss_sum = 0;

    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      const int64_t global_step = epoch * steps_per_epoch + step;
      Tensor<float> pair_batch({2 * batch, 3, r, r});
      Tensor<float> view1({batch, 3, r, r});
      Tensor<float> view2({batch, 3, r, r});
      const bool split_views = model.method != ssl::Method::simclr;
#pragma omp parallel for schedule(static) num_threads(int(std::max<int64_t>(1, opts.workers)))
      for (int64_t b = 0; b < batch; ++b) {
        const int64_t idx = order[step * batch + b];
        auto raw = data::to_float(images[idx]);
        auto seed = derive_sample_seed(snap.seed, epoch, idx);
        auto [v1, v2] = data::simclr_view_pair(raw, snap.recipe, seed);
        v1 = data::normalize_image(v1, snap.norm_mean, snap.norm_std);
        v2 = data::normalize_image(v2, snap.norm_mean, snap.norm_std);
        const int64_t plane = 3 * r * r;
        if (split_views) {
          std::memcpy(view1.data() + b * plane, v1.data(), sizeof(float) * plane);
          std::memcpy(view2.data() + b * plane, v2.data(), sizeof(float) * plane);
        } else {
          std::memcpy(pair_batch.data() + (2 * b) * plane, v1.data(),
                      sizeof(float) * plane);
          std::memcpy(pair_batch.data() + (2 * b + 1) * plane, v2.data(),
                      sizeof(float) * plane);
        }
      }

      ag::Var<float> loss;
      switch (model.method) {
        case ssl::Method::simclr:
          loss = simclr_forward_loss(*model.backbone, model.proj, pair_batch,
                                     snap.ssl_cfg.temperature);
          break;
        case ssl::Method::mocov3:
          loss = mocov3_forward_loss(model, view1, view2,
                                     snap.ssl_cfg.temperature);
          break;
        case ssl::Method::swav:
          loss = swav_forward_loss(model, view1, view2, snap.ssl_cfg);
          break;
      }
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value))
        throw std::runtime_error("run_pretraining: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step));
      opt.zero_grad();
      ag::backward(loss);
      const double lr = optim::warmup_cosine_lr(global_step, snap.schedule);
      opt.step(lr);

      if (model.method == ssl::Method::swav)
        renormalize_prototypes(model.prototypes);
      if (model.method == ssl::Method::mocov3) {
        const double m = momentum_at_step(snap.ssl_cfg.momentum, global_step,
                                          total_steps);
        ssl::momentum_update(model.backbone->params(),
                             model.momentum_backbone->params(), m);
        ssl::momentum_update(model.heads, model.momentum_heads, m);
      }

      loss_sum += loss_value;
      record.lr.push_back(lr);
    }

    record.mean_loss = loss_sum / steps_per_epoch;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      epoch_start)
            .count();
    log.epochs.push_back(record);
    loss_history.push_back(record.mean_loss);

    if (!opts.out_dir.empty()) {
      log.save_ndjson((fs::path(opts.out_dir) / "train_log.ndjson").string());
      const bool last = (epoch + 1 == epochs);
      if (last || (opts.save_every > 0 && (epoch + 1) % opts.save_every == 0)) {
        Checkpoint ckpt =
            model_to_checkpoint(model, snap, epoch + 1, loss_history);
        save_checkpoint(ckpt,
                        (fs::path(opts.out_dir) / "checkpoint.assl").string());
      }
    }
  }

  TrainResult result;
  result.checkpoint = model_to_checkpoint(model, snap, epochs, loss_history);
  result.log = std::move(log);
  if (!opts.out_dir.empty() && epochs == 0)
    save_checkpoint(result.checkpoint,
                    (fs::path(opts.out_dir) / "checkpoint.assl").string());
  return result;
}

}  // namespace assl::train
