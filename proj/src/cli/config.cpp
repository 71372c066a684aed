#include "assl/cli/config.hpp"

#include <fstream>
#include <set>

namespace assl::cli {

namespace {

using train::json;

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object())
    throw ConfigError("config: '" + context + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + context);
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  require_keys(j,
               {"backbone", "ssl", "optim", "schedule", "recipe", "data",
                "seed", "out_dir", "save_every", "norm_mean", "norm_std"},
               "the top level");
  RunConfig cfg;
  try {
    if (j.contains("backbone")) {
      require_keys(j.at("backbone"),
                   {"family", "with_cbam", "cbam", "input_resolution"},
                   "backbone");
      if (j.at("backbone").contains("cbam"))
        require_keys(j.at("backbone").at("cbam"),
                     {"reduction", "spatial_kernel", "placement"},
                     "backbone.cbam");
      cfg.snap.backbone = train::backbone_from_json(j.at("backbone"));
    }
    if (j.contains("ssl")) {
      require_keys(j.at("ssl"),
                   {"method", "temperature", "proj_hidden", "proj_out",
                    "momentum", "prototypes", "sinkhorn_iterations",
                    "sinkhorn_epsilon", "epochs", "batch_size"},
                   "ssl");
      cfg.snap.ssl_cfg = train::ssl_from_json(j.at("ssl"));
    }
    if (j.contains("optim")) {
      require_keys(j.at("optim"),
                   {"optimizer", "base_lr", "momentum", "weight_decay",
                    "trust_coefficient", "exclude_bias_and_norm"},
                   "optim");
      cfg.snap.optimizer = train::optim_from_json(j.at("optim"));
    }
    if (j.contains("schedule")) {
      require_keys(j.at("schedule"),
                   {"base_lr", "warmup_epochs", "total_epochs", "min_lr",
                    "steps_per_epoch"},
                   "schedule");
      cfg.snap.schedule = train::schedule_from_json(j.at("schedule"));
    }
    if (j.contains("recipe")) {
      require_keys(j.at("recipe"),
                   {"out_size", "crop_scale", "aspect", "flip_p", "jitter_p",
                    "jitter_strengths", "grayscale_p", "blur_p", "blur_sigma"},
                   "recipe");
      cfg.snap.recipe = train::recipe_from_json(j.at("recipe"));
    }
    if (j.contains("data")) {
      require_keys(j.at("data"), {"train", "val"}, "data");
      cfg.train_data = j.at("data").value("train", std::string());
      cfg.val_data = j.at("data").value("val", std::string());
    }
    cfg.snap.seed = j.value("seed", cfg.snap.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.save_every = j.value("save_every", cfg.save_every);
    if (j.contains("norm_mean"))
      for (int i = 0; i < 3; ++i)
        cfg.snap.norm_mean[i] = j.at("norm_mean").at(i).get<float>();
    if (j.contains("norm_std"))
      for (int i = 0; i < 3; ++i)
        cfg.snap.norm_std[i] = j.at("norm_std").at(i).get<float>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("config: cannot open " + json_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + json_path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace assl::cli
