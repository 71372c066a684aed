#pragma once

#include <array>
#include <json.hpp>

#include "assl/backbones/extractor.hpp"
#include "assl/data/augment.hpp"
#include "assl/optim/optim.hpp"
#include "assl/ssl/losses.hpp"

namespace assl::train {

using json = nlohmann::json;

/// Everything a run resolved, defaults included; embedded into checkpoints
/// so a pretraining run can be reproduced and its evaluation re-attached.
struct RunSnapshot {
  backbones::BackboneSpec backbone;
  ssl::SslConfig ssl_cfg;
  optim::OptimConfig optimizer;
  optim::ScheduleConfig schedule;
  uint64_t seed = 0;
  std::array<float, 3> norm_mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> norm_std{0.229f, 0.224f, 0.225f};
  data::AugmentRecipe recipe;
};

inline json to_json(const backbones::BackboneSpec& s) {
  return json{{"family", backbones::to_string(s.family)},
              {"with_cbam", s.with_cbam},
              {"cbam",
               {{"reduction", s.cbam.reduction},
                {"spatial_kernel", s.cbam.spatial_kernel},
                {"placement", s.cbam.placement}}},
              {"input_resolution", s.input_resolution}};
}

inline backbones::BackboneSpec backbone_from_json(const json& j) {
  backbones::BackboneSpec s;
  s.family = backbones::family_from_string(j.at("family").get<std::string>());
  s.with_cbam = j.value("with_cbam", false);
  if (j.contains("cbam")) {
    const auto& c = j.at("cbam");
    s.cbam.reduction = c.value("reduction", int64_t(16));
    s.cbam.spatial_kernel = c.value("spatial_kernel", int64_t(7));
    s.cbam.placement = c.value("placement", std::string("last_stage"));
  }
  s.input_resolution = j.value("input_resolution", int64_t(224));
  s.validate();
  return s;
}

inline json to_json(const ssl::SslConfig& c) {
  return json{{"method", ssl::to_string(c.method)},
              {"temperature", c.temperature},
              {"proj_hidden", c.proj_hidden},
              {"proj_out", c.proj_out},
              {"momentum", c.momentum},
              {"prototypes", c.prototypes},
              {"sinkhorn_iterations", c.sinkhorn_iterations},
              {"sinkhorn_epsilon", c.sinkhorn_epsilon},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size}};
}

inline ssl::SslConfig ssl_from_json(const json& j) {
  ssl::SslConfig c;
  c.method = ssl::method_from_string(j.at("method").get<std::string>());
  c.temperature = j.value("temperature", c.temperature);
  c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
  c.proj_out = j.value("proj_out", c.proj_out);
  c.momentum = j.value("momentum", c.momentum);
  c.prototypes = j.value("prototypes", c.prototypes);
  c.sinkhorn_iterations = j.value("sinkhorn_iterations", c.sinkhorn_iterations);
  c.sinkhorn_epsilon = j.value("sinkhorn_epsilon", c.sinkhorn_epsilon);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.validate();
  return c;
}

inline json to_json(const optim::OptimConfig& c) {
  return json{{"optimizer", optim::to_string(c.kind)},
              {"base_lr", c.base_lr},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"trust_coefficient", c.trust_coefficient},
              {"exclude_bias_and_norm", c.exclude_bias_and_norm}};
}

inline optim::OptimConfig optim_from_json(const json& j) {
  optim::OptimConfig c;
  c.kind = optim::opt_kind_from_string(
      j.value("optimizer", optim::to_string(c.kind)));
  c.base_lr = j.value("base_lr", c.base_lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.trust_coefficient = j.value("trust_coefficient", c.trust_coefficient);
  c.exclude_bias_and_norm =
      j.value("exclude_bias_and_norm", c.exclude_bias_and_norm);
  c.validate();
  return c;
}

inline json to_json(const optim::ScheduleConfig& c) {
  return json{{"base_lr", c.base_lr},
              {"warmup_epochs", c.warmup_epochs},
              {"total_epochs", c.total_epochs},
              {"min_lr", c.min_lr},
              {"steps_per_epoch", c.steps_per_epoch}};
}

inline optim::ScheduleConfig schedule_from_json(const json& j) {
  optim::ScheduleConfig c;
  c.base_lr = j.value("base_lr", c.base_lr);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.total_epochs = j.value("total_epochs", c.total_epochs);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  return c;
}

inline json to_json(const data::AugmentRecipe& r) {
  return json{{"out_size", r.out_size},
              {"crop_scale", {r.crop_scale_lo, r.crop_scale_hi}},
              {"aspect", {r.aspect_lo, r.aspect_hi}},
              {"flip_p", r.flip_p},
              {"jitter_p", r.jitter_p},
              {"jitter_strengths",
               {r.brightness, r.contrast, r.saturation, r.hue}},
              {"grayscale_p", r.grayscale_p},
              {"blur_p", r.blur_p},
              {"blur_sigma", {r.blur_sigma_lo, r.blur_sigma_hi}}};
}

inline data::AugmentRecipe recipe_from_json(const json& j) {
  data::AugmentRecipe r;
  r.out_size = j.value("out_size", r.out_size);
  if (j.contains("crop_scale")) {
    r.crop_scale_lo = j.at("crop_scale").at(0).get<double>();
    r.crop_scale_hi = j.at("crop_scale").at(1).get<double>();
  }
  if (j.contains("aspect")) {
    r.aspect_lo = j.at("aspect").at(0).get<double>();
    r.aspect_hi = j.at("aspect").at(1).get<double>();
  }
  r.flip_p = j.value("flip_p", r.flip_p);
  r.jitter_p = j.value("jitter_p", r.jitter_p);
  if (j.contains("jitter_strengths")) {
    const auto& s = j.at("jitter_strengths");
    r.brightness = s.at(0).get<double>();
    r.contrast = s.at(1).get<double>();
    r.saturation = s.at(2).get<double>();
    r.hue = s.at(3).get<double>();
  }
  r.grayscale_p = j.value("grayscale_p", r.grayscale_p);
  r.blur_p = j.value("blur_p", r.blur_p);
  if (j.contains("blur_sigma")) {
    r.blur_sigma_lo = j.at("blur_sigma").at(0).get<double>();
    r.blur_sigma_hi = j.at("blur_sigma").at(1).get<double>();
  }
  return r;
}

inline json to_json(const RunSnapshot& s) {
  return json{{"backbone", to_json(s.backbone)},
              {"ssl", to_json(s.ssl_cfg)},
              {"optim", to_json(s.optimizer)},
              {"schedule", to_json(s.schedule)},
              {"seed", s.seed},
              {"norm_mean", s.norm_mean},
              {"norm_std", s.norm_std},
              {"recipe", to_json(s.recipe)}};
}

inline RunSnapshot snapshot_from_json(const json& j) {
  RunSnapshot s;
  s.backbone = backbone_from_json(j.at("backbone"));
  s.ssl_cfg = ssl_from_json(j.at("ssl"));
  s.optimizer = optim_from_json(j.at("optim"));
  s.schedule = schedule_from_json(j.at("schedule"));
  s.seed = j.value("seed", uint64_t(0));
  if (j.contains("norm_mean"))
    for (int i = 0; i < 3; ++i) s.norm_mean[i] = j.at("norm_mean").at(i).get<float>();
  if (j.contains("norm_std"))
    for (int i = 0; i < 3; ++i) s.norm_std[i] = j.at("norm_std").at(i).get<float>();
  if (j.contains("recipe")) s.recipe = recipe_from_json(j.at("recipe"));
  return s;
}

}  // namespace assl::train
