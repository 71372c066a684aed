#include "assl/eval/linear_eval.hpp"

#include <cstring>
#include <filesystem>
#include <numeric>

#include "assl/data/augment.hpp"
#include "assl/data/image_io.hpp"

namespace fs = std::filesystem;

namespace assl::eval {

namespace {

uint64_t head_init_seed(uint64_t seed) {
  return assl::detail::splitmix64(seed ^ 0x11ea6ea1ULL);
}

std::vector<data::Image8> load_images(const data::DatasetManifest& manifest) {
  std::vector<data::Image8> images;
  images.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto img =
        data::decode_image((fs::path(manifest.root) / e.rel_path).string());
    if (!img)
      throw std::runtime_error("linear eval: cannot decode " + e.rel_path);
    images.push_back(std::move(*img));
  }
  return images;
}

/// Frozen-backbone embeddings for one normalized batch.
Tensor<float> embed_batch(backbones::FeatureExtractor<float>& backbone,
                          const Tensor<float>& batch) {
  ag::NoGradGuard guard;
  return backbone.forward(batch, /*training=*/false).embedding->value;
}

int argmax_lowest_tie(const float* logits, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (logits[i] > logits[best]) best = i;  // strict: ties keep lowest code
  return best;
}

std::array<double, 4> softmax4(const float* logits) {
  double mx = logits[0];
  for (int i = 1; i < 4; ++i) mx = std::max(mx, double(logits[i]));
  std::array<double, 4> p{};
  double sum = 0;
  for (int i = 0; i < 4; ++i) {
    p[i] = std::exp(double(logits[i]) - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

LinearHead train_linear_head(const train::Checkpoint& ckpt,
                             const data::DatasetManifest& train_manifest,
                             const optim::OptimConfig& opt_cfg,
                             optim::ScheduleConfig sched,
                             const LinearEvalOptions& opts) {
  if (!train_manifest.fully_labeled())
    throw std::invalid_argument(
        "train_linear_head: the training manifest must be fully labeled");

  auto backbone = train::restore_backbone(ckpt);
  const uint64_t frozen_hash = backbone->params().content_hash();
  const int64_t dim = backbone->embedding_dim();
  const int64_t r = ckpt.config.backbone.input_resolution;
  const auto& mean = ckpt.config.norm_mean;
  const auto& stddev = ckpt.config.norm_std;

  nn::ParamStore<float> head_store;
  Rng rng(head_init_seed(opts.seed));
  auto weight =
      head_store.add_param("linear_head.weight", nn::linear_init<float>(4, dim, rng));
  auto bias =
      head_store.add_param("linear_head.bias", Tensor<float>::zeros({4}), true);

  const int64_t n = static_cast<int64_t>(train_manifest.entries.size());
  const int64_t batch = std::min<int64_t>(opts.batch_size, n);
  const int64_t steps_per_epoch = (n + batch - 1) / batch;  // keep the tail
  sched.total_epochs = std::max<int64_t>(opts.epochs, 1);
  sched.steps_per_epoch = steps_per_epoch;
  if (sched.base_lr <= 0) sched.base_lr = opt_cfg.base_lr;
  if (sched.warmup_epochs >= sched.total_epochs) sched.warmup_epochs = 0;

  optim::Optimizer<float> opt(opt_cfg, head_store.params());
  auto images = load_images(train_manifest);
  auto recipe = data::AugmentRecipe::eval_train(r);

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng perm(assl::detail::splitmix64(opts.seed ^ 0x5eedULL ^
                                      static_cast<uint64_t>(epoch)));
    perm.shuffle(order);
    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      const int64_t begin = step * batch;
      const int64_t count = std::min<int64_t>(batch, n - begin);
      Tensor<float> batch_pixels({count, 3, r, r});
      std::vector<int64_t> labels(count);
#pragma omp parallel for schedule(static) num_threads(int(std::max<int64_t>(1, opts.workers)))
      for (int64_t b = 0; b < count; ++b) {
        const int64_t idx = order[begin + b];
        auto raw = data::to_float(images[idx]);
        Rng arng(train::derive_sample_seed(opts.seed, epoch, idx), 1);
        auto view = data::augment_view(raw, recipe, arng);
        view = data::normalize_image(view, mean, stddev);
        std::memcpy(batch_pixels.data() + b * 3 * r * r, view.data(),
                    sizeof(float) * 3 * r * r);
        labels[b] = *train_manifest.entries[idx].label;
      }
      auto embeddings = ag::constant(embed_batch(*backbone, batch_pixels));
      auto logits = ag::linear<float>(embeddings, weight, bias);
      auto loss = ag::cross_entropy(logits, labels);
      if (!std::isfinite(double(loss->value[0])))
        throw std::runtime_error("train_linear_head: non-finite loss");
      opt.zero_grad();
      ag::backward(loss);
      opt.step(optim::warmup_cosine_lr(epoch * steps_per_epoch + step, sched));
    }
  }

  if (backbone->params().content_hash() != frozen_hash)
    throw std::logic_error(
        "train_linear_head: backbone bytes changed during head training");

  LinearHead head;
  head.weight = weight->value.clone();
  head.bias = bias->value.clone();
  return head;
}

std::vector<Prediction> predict(backbones::FeatureExtractor<float>& backbone,
                                const LinearHead& head,
                                const std::vector<data::ImageRecord>& records,
                                const train::RunSnapshot& snap) {
  if (head.embedding_dim() != backbone.embedding_dim())
    throw std::invalid_argument(
        "predict: head dimension " + std::to_string(head.embedding_dim()) +
        " does not match the backbone embedding dimension " +
        std::to_string(backbone.embedding_dim()));
  const int64_t r = snap.backbone.input_resolution;
  const int64_t n = static_cast<int64_t>(records.size());
  std::vector<Prediction> out(records.size());
  if (n == 0) return out;

  Tensor<float> batch({n, 3, r, r});
  for (int64_t i = 0; i < n; ++i) {
    auto img = data::bilinear_resize(data::to_float(records[i].image), r, r);
    img = data::normalize_image(img, snap.norm_mean, snap.norm_std);
    std::memcpy(batch.data() + i * 3 * r * r, img.data(),
                sizeof(float) * 3 * r * r);
  }
  Tensor<float> embeddings = embed_batch(backbone, batch);
  ag::NoGradGuard guard;
  auto logits = ag::linear<float>(ag::constant(embeddings),
                                  ag::constant(head.weight),
                                  ag::constant(head.bias));
  for (int64_t i = 0; i < n; ++i) {
    const float* row = logits->value.data() + i * 4;
    out[i].category = argmax_lowest_tie(row, 4);
    out[i].probabilities = softmax4(row);
  }
  return out;
}

std::vector<Prediction> predict_paths(
    backbones::FeatureExtractor<float>& backbone, const LinearHead& head,
    const std::vector<std::string>& paths, const train::RunSnapshot& snap) {
  std::vector<Prediction> out(paths.size());
  std::vector<data::ImageRecord> decoded;
  std::vector<size_t> positions;
  for (size_t i = 0; i < paths.size(); ++i) {
    auto img = data::decode_image(paths[i]);
    if (!img) {
      out[i].error = "cannot decode " + paths[i];
      continue;
    }
    decoded.push_back({paths[i], std::move(*img), std::nullopt});
    positions.push_back(i);
  }
  auto preds = predict(backbone, head, decoded, snap);
  for (size_t j = 0; j < preds.size(); ++j) out[positions[j]] = preds[j];
  return out;
}

EvalReport evaluate_head(backbones::FeatureExtractor<float>& backbone,
                         const LinearHead& head,
                         const data::DatasetManifest& val_manifest,
                         const train::RunSnapshot& snap, uint64_t seed) {
  if (!val_manifest.fully_labeled())
    throw std::invalid_argument(
        "evaluate_head: the validation manifest must be fully labeled");
  std::vector<data::ImageRecord> records;
  std::vector<int> truth;
  for (const auto& e : val_manifest.entries) {
    records.push_back(data::load_record(
        (fs::path(val_manifest.root) / e.rel_path).string()));
    truth.push_back(*e.label);
  }
  auto preds = predict(backbone, head, records, snap);
  std::vector<int> labels;
  for (const auto& p : preds) labels.push_back(p.category);
  return evaluate_report(labels, truth, seed);
}

LinearEvalResult linear_evaluate(const train::Checkpoint& ckpt,
                                 const data::DatasetManifest& train_manifest,
                                 const data::DatasetManifest& val_manifest,
                                 const optim::OptimConfig& opt_cfg,
                                 optim::ScheduleConfig sched,
                                 const std::vector<uint64_t>& seeds,
                                 const LinearEvalOptions& opts) {
  if (seeds.empty())
    throw std::invalid_argument("linear_evaluate: need at least one seed");
  auto backbone = train::restore_backbone(ckpt);
  LinearEvalResult result;
  std::vector<double> accuracies;
  for (size_t i = 0; i < seeds.size(); ++i) {
    LinearEvalOptions per_seed = opts;
    per_seed.seed = seeds[i];
    LinearHead head =
        train_linear_head(ckpt, train_manifest, opt_cfg, sched, per_seed);
    EvalReport report =
        evaluate_head(*backbone, head, val_manifest, ckpt.config, seeds[i]);
    accuracies.push_back(report.top1);
    result.reports.push_back(std::move(report));
    if (i == 0) result.head = std::move(head);
  }
  result.aggregate = aggregate_runs(accuracies);
  return result;
}

void save_head_checkpoint(const train::Checkpoint& backbone_ckpt,
                          const LinearHead& head, const std::string& path) {
  train::Checkpoint ckpt = backbone_ckpt;
  // Replace any previous head arrays.
  std::erase_if(ckpt.arrays, [](const train::Checkpoint::Array& a) {
    return a.name.rfind("linear_head.", 0) == 0;
  });
  ckpt.add_array_f32("linear_head.weight", head.weight);
  ckpt.add_array_f32("linear_head.bias", head.bias);
  train::save_checkpoint(ckpt, path);
}

LinearHead head_from_checkpoint(const train::Checkpoint& ckpt) {
  LinearHead head;
  head.weight = ckpt.get_f32("linear_head.weight");
  head.bias = ckpt.get_f32("linear_head.bias");
  return head;
}

}  // namespace assl::eval
