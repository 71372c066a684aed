// Command-line surface: pretrain / linear-eval / predict / cam / profile /
// synth. Machine-readable artifacts go to files; logs go to stderr.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "assl/cli/config.hpp"
#include "assl/data/image_io.hpp"
#include "assl/data/synth.hpp"
#include "assl/eval/linear_eval.hpp"
#include "assl/interpret/gradcam.hpp"
#include "assl/profile/profiler.hpp"
#include "assl/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace assl;

namespace {

int64_t env_workers() {
  const char* v = std::getenv("ASSL_NUM_WORKERS");
  if (!v) return 1;
  try {
    return std::max<int64_t>(1, std::stoll(v));
  } catch (...) {
    return 1;
  }
}

/// Loads a manifest CSV or scans a directory (category subdirectories).
data::DatasetManifest load_data(const std::string& path) {
  if (fs::is_directory(path))
    return data::scan_image_folder(path, data::FolderLayout::category_subdirs);
  return data::load_manifest(path);
}

struct PretrainFlags {
  std::string config_path, data_path, method, backbone, out_dir;
  bool cbam = false;
  int64_t epochs = -1, batch_size = -1, resolution = -1;
  int64_t seed = -1;
};

int cmd_pretrain(const PretrainFlags& flags) {
  cli::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = cli::load_run_config(flags.config_path);
  // Flags override file values.
  if (!flags.data_path.empty()) cfg.train_data = flags.data_path;
  if (!flags.method.empty())
    cfg.snap.ssl_cfg.method = ssl::method_from_string(flags.method);
  if (!flags.backbone.empty())
    cfg.snap.backbone.family = backbones::family_from_string(flags.backbone);
  if (flags.cbam) cfg.snap.backbone.with_cbam = true;
  if (flags.epochs >= 0) cfg.snap.ssl_cfg.epochs = flags.epochs;
  if (flags.batch_size > 0) cfg.snap.ssl_cfg.batch_size = flags.batch_size;
  if (flags.resolution > 0) cfg.snap.backbone.input_resolution = flags.resolution;
  if (flags.seed >= 0) cfg.snap.seed = static_cast<uint64_t>(flags.seed);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (cfg.train_data.empty())
    throw cli::ConfigError("pretrain: no data given (use --data or the config file)");

  auto manifest = load_data(cfg.train_data);
  std::cerr << "pretrain: " << manifest.entries.size() << " images, method "
            << ssl::to_string(cfg.snap.ssl_cfg.method) << ", backbone "
            << backbones::to_string(cfg.snap.backbone.family)
            << (cfg.snap.backbone.with_cbam ? "+cbam" : "") << "\n";

  train::TrainOptions opts;
  opts.out_dir = cfg.out_dir;
  opts.save_every = cfg.save_every;
  opts.workers = env_workers();
  auto result = train::run_pretraining(manifest, cfg.snap, opts);
  std::cerr << "pretrain: finished " << result.log.epochs.size()
            << " epochs, checkpoint in " << cfg.out_dir << "\n";
  return 0;
}

struct LinearEvalFlags {
  std::string checkpoint, train_manifest, val_manifest, out_dir = "eval_out";
  int64_t epochs = 100, batch_size = 64;
  std::vector<uint64_t> seeds = {1, 2, 3};
  double lr = 0.6, momentum = 0.9, weight_decay = 0.0;
};

int cmd_linear_eval(const LinearEvalFlags& flags) {
  auto ckpt = train::load_checkpoint_file(flags.checkpoint);
  auto train_manifest = load_data(flags.train_manifest);
  auto val_manifest = load_data(flags.val_manifest);

  optim::OptimConfig opt_cfg;
  opt_cfg.kind = optim::OptKind::lars;
  opt_cfg.base_lr = flags.lr;
  opt_cfg.momentum = flags.momentum;
  opt_cfg.weight_decay = flags.weight_decay;
  optim::ScheduleConfig sched;
  sched.warmup_epochs = 0;
  sched.base_lr = flags.lr;

  eval::LinearEvalOptions opts;
  opts.epochs = flags.epochs;
  opts.batch_size = flags.batch_size;
  opts.workers = env_workers();

  auto result = eval::linear_evaluate(ckpt, train_manifest, val_manifest,
                                      opt_cfg, sched, flags.seeds, opts);

  fs::create_directories(flags.out_dir);
  train::json out;
  out["reports"] = train::json::array();
  for (const auto& r : result.reports) out["reports"].push_back(r.to_json());
  out["accuracy_mean"] = result.aggregate.mean;
  if (result.aggregate.stddev_defined)
    out["accuracy_std"] = result.aggregate.stddev;
  else
    out["accuracy_std"] = nullptr;
  out["seeds"] = flags.seeds;
  out["epochs"] = flags.epochs;
  {
    std::ofstream f(fs::path(flags.out_dir) / "eval_report.json");
    f << out.dump(2) << "\n";
  }
  eval::save_head_checkpoint(ckpt, result.head,
                             (fs::path(flags.out_dir) / "head.assl").string());
  // The resolved configuration, next to the artifacts.
  {
    train::json cfg{{"checkpoint", flags.checkpoint},
                    {"train_manifest", flags.train_manifest},
                    {"val_manifest", flags.val_manifest},
                    {"epochs", flags.epochs},
                    {"batch_size", flags.batch_size},
                    {"seeds", flags.seeds},
                    {"optim", train::to_json(opt_cfg)}};
    std::ofstream f(fs::path(flags.out_dir) / "eval_config.json");
    f << cfg.dump(2) << "\n";
  }
  std::cerr << "linear-eval: accuracy " << result.aggregate.mean;
  if (result.aggregate.stddev_defined)
    std::cerr << " +/- " << result.aggregate.stddev;
  std::cerr << " over " << flags.seeds.size() << " seed(s)\n";
  return 0;
}

struct PredictFlags {
  std::string checkpoint, images, out;
};

int cmd_predict(const PredictFlags& flags) {
  auto ckpt = train::load_checkpoint_file(flags.checkpoint);
  auto backbone = train::restore_backbone(ckpt);
  auto head = eval::head_from_checkpoint(ckpt);

  std::vector<std::string> paths;
  if (fs::is_directory(flags.images)) {
    for (const auto& e : fs::directory_iterator(flags.images))
      if (e.is_regular_file()) paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
  } else {
    paths.push_back(flags.images);
  }

  auto preds = eval::predict_paths(*backbone, head, paths, ckpt.config);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!flags.out.empty()) {
    file.open(flags.out);
    out = &file;
  }
  int64_t failures = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    train::json line{{"path", paths[i]}};
    if (!preds[i].error.empty()) {
      line["error"] = preds[i].error;
      ++failures;
    } else {
      line["category"] = data::to_string(
          data::roof_class_from_code(preds[i].category));
      line["code"] = preds[i].category;
      line["probabilities"] = preds[i].probabilities;
    }
    (*out) << line.dump() << "\n";
  }
  std::cerr << "predict: " << (preds.size() - failures) << " ok, " << failures
            << " failed\n";
  return 0;
}

struct CamFlags {
  std::string checkpoint, image, out = "cam.png";
  std::string target = "Gable";
  double alpha = 0.5;
};

int cmd_cam(const CamFlags& flags) {
  auto ckpt = train::load_checkpoint_file(flags.checkpoint);
  auto backbone = train::restore_backbone(ckpt);
  auto head = eval::head_from_checkpoint(ckpt);
  auto target = data::roof_class_from_string(flags.target);
  if (!target)
    throw cli::ConfigError("cam: unknown target category '" + flags.target +
                           "' (expected Gable, Hip, Flat or Complex)");
  auto record = data::load_record(flags.image);
  auto heatmap = interpret::grad_cam(*backbone, head, record, ckpt.config,
                                     static_cast<int>(*target));
  interpret::write_cam_artifacts(heatmap, record.image, flags.alpha, flags.out);
  std::cerr << "cam: wrote " << flags.out << (heatmap.degenerate ? " (degenerate)" : "")
            << "\n";
  return 0;
}

struct ProfileFlags {
  std::string backbone = "effnet-b3";
  bool cbam = false;
  int64_t resolution = 224, batch_size = 32, iterations = 0;
  std::string out;
};

int cmd_profile(const ProfileFlags& flags) {
  backbones::BackboneSpec spec;
  spec.family = backbones::family_from_string(flags.backbone);
  spec.with_cbam = flags.cbam;
  spec.input_resolution = flags.resolution;
  auto report = profile::profile_model(spec, flags.resolution, flags.batch_size,
                                       flags.iterations);
  std::string text = report.to_json().dump(2);
  if (!flags.out.empty()) {
    std::ofstream f(flags.out);
    f << text << "\n";
  } else {
    std::cout << text << "\n";
  }
  std::cerr << "profile: " << flags.backbone << (flags.cbam ? "+cbam" : "")
            << " params=" << report.params << " flops=" << report.flops << "\n";
  return 0;
}

struct SynthFlags {
  std::string out = "synth_data";
  int64_t per_class_train = 128, per_class_val = 32, size = 64;
  uint64_t seed = 7;
};

int cmd_synth(const SynthFlags& flags) {
  data::SynthDatasetSpec spec;
  spec.per_class_train = flags.per_class_train;
  spec.per_class_val = flags.per_class_val;
  spec.size = flags.size;
  spec.seed = flags.seed;
  int64_t written = data::write_synth_dataset(flags.out, spec);
  std::cerr << "synth: wrote " << written << " images under " << flags.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised roof-type classification toolkit"};
  app.require_subcommand(1);

  PretrainFlags pf;
  auto* pretrain = app.add_subcommand("pretrain", "contrastive pretraining");
  pretrain->add_option("--config", pf.config_path, "JSON config file");
  pretrain->add_option("--data", pf.data_path, "manifest CSV or image directory");
  pretrain->add_option("--method", pf.method, "ssl method")
      ->check(CLI::IsMember({"simclr", "mocov3", "swav"}));
  pretrain->add_option("--backbone", pf.backbone, "backbone family")
      ->check(CLI::IsMember({"resnet34", "resnet50", "effnet-b0", "effnet-b1",
                             "effnet-b2", "effnet-b3"}));
  pretrain->add_flag("--cbam", pf.cbam, "attach the attention block");
  pretrain->add_option("--epochs", pf.epochs, "training epochs");
  pretrain->add_option("--batch-size", pf.batch_size, "batch size");
  pretrain->add_option("--resolution", pf.resolution, "input resolution");
  pretrain->add_option("--seed", pf.seed, "run seed");
  pretrain->add_option("--out", pf.out_dir, "output directory");

  LinearEvalFlags lf;
  auto* lineval = app.add_subcommand("linear-eval", "frozen-backbone evaluation");
  lineval->add_option("--checkpoint", lf.checkpoint)->required();
  lineval->add_option("--train-manifest", lf.train_manifest)->required();
  lineval->add_option("--val-manifest", lf.val_manifest)->required();
  lineval->add_option("--epochs", lf.epochs);
  lineval->add_option("--batch-size", lf.batch_size);
  lineval->add_option("--seeds", lf.seeds, "evaluation seeds")->delimiter(',');
  lineval->add_option("--lr", lf.lr);
  lineval->add_option("--momentum", lf.momentum);
  lineval->add_option("--weight-decay", lf.weight_decay);
  lineval->add_option("--out", lf.out_dir);

  PredictFlags prf;
  auto* predict = app.add_subcommand("predict", "classify images");
  predict->add_option("--checkpoint", prf.checkpoint, "head checkpoint")->required();
  predict->add_option("--images", prf.images, "image file or directory")->required();
  predict->add_option("--out", prf.out, "output JSONL (default: stdout)");

  CamFlags cf;
  auto* cam = app.add_subcommand("cam", "class activation map overlay");
  cam->add_option("--checkpoint", cf.checkpoint, "head checkpoint")->required();
  cam->add_option("--image", cf.image)->required();
  cam->add_option("--target", cf.target, "target category")
      ->check(CLI::IsMember({"Gable", "Hip", "Flat", "Complex"}));
  cam->add_option("--alpha", cf.alpha, "overlay blend in [0,1]");
  cam->add_option("--out", cf.out, "output PNG path");

  ProfileFlags prof;
  auto* profile = app.add_subcommand("profile", "parameter/FLOP/time report");
  profile->add_option("--backbone", prof.backbone)
      ->check(CLI::IsMember({"resnet34", "resnet50", "effnet-b0", "effnet-b1",
                             "effnet-b2", "effnet-b3"}));
  profile->add_flag("--cbam", prof.cbam);
  profile->add_option("--resolution", prof.resolution);
  profile->add_option("--batch-size", prof.batch_size);
  profile->add_option("--iterations", prof.iterations,
                      "benchmark iterations (0 skips timing)");
  profile->add_option("--out", prof.out, "output JSON (default: stdout)");

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "generate the synthetic roof set");
  synth->add_option("--out", sf.out);
  synth->add_option("--per-class-train", sf.per_class_train);
  synth->add_option("--per-class-val", sf.per_class_val);
  synth->add_option("--size", sf.size);
  synth->add_option("--seed", sf.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*pretrain) return cmd_pretrain(pf);
    if (*lineval) return cmd_linear_eval(lf);
    if (*predict) return cmd_predict(prf);
    if (*cam) return cmd_cam(cf);
    if (*profile) return cmd_profile(prof);
    if (*synth) return cmd_synth(sf);
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
