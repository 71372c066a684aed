#include "assl/profile/profiler.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <thread>

#include "assl/optim/optim.hpp"

namespace assl::profile {

namespace {

/// Groups a parameter name into its block prefix: "stage3.block1.dw.conv.weight"
/// -> "stage3.block1"; "stem.conv.weight" -> "stem".
std::string block_prefix(const std::string& name) {
  size_t first = name.find('.');
  if (first == std::string::npos) return name;
  std::string head = name.substr(0, first);
  if (head.rfind("stage", 0) == 0) {
    size_t second = name.find('.', first + 1);
    return second == std::string::npos ? name : name.substr(0, second);
  }
  return head;
}

}  // namespace

nlohmann::json ProfileReport::to_json() const {
  nlohmann::json layer_list = nlohmann::json::array();
  for (const auto& l : layers)
    layer_list.push_back(
        {{"name", l.name}, {"params", l.params}, {"flops", l.flops}});
  return nlohmann::json{{"family", family},
                        {"with_cbam", with_cbam},
                        {"resolution", resolution},
                        {"params", params},
                        {"flops", flops},
                        {"conv_macs", conv_macs},
                        {"seconds_per_iteration", seconds_per_iteration},
                        {"batch_size", batch_size},
                        {"hardware", hardware},
                        {"layers", layer_list}};
}

int64_t count_params(const backbones::FeatureExtractor<float>& extractor,
                     std::vector<LayerCost>* breakdown) {
  std::map<std::string, int64_t> by_block;
  int64_t total = 0;
  for (const auto& p : extractor.params().params()) {
    total += p.var->value.size();
    by_block[block_prefix(p.name)] += p.var->value.size();
  }
  if (breakdown) {
    for (const auto& [name, count] : by_block)
      breakdown->push_back({name, count, 0});
  }
  return total;
}

int64_t count_flops(backbones::FeatureExtractor<float>& extractor,
                    int64_t resolution, std::vector<LayerCost>* breakdown,
                    int64_t* conv_macs) {
  flops::Counter counter;
  {
    flops::CounterGuard guard(counter);
    ag::NoGradGuard no_grad;
    Tensor<float> probe({1, 3, resolution, resolution});
    extractor.forward(probe, /*training=*/false);
  }
  if (breakdown) {
    for (const auto& [scope, count] : counter.by_scope)
      breakdown->push_back({scope, 0, count});
  }
  if (conv_macs) *conv_macs = counter.conv_macs;
  return counter.total;
}

double benchmark_iteration(backbones::FeatureExtractor<float>& extractor,
                           int64_t batch_size, int64_t resolution,
                           int64_t iterations, int64_t warmup) {
  if (iterations < 10)
    throw std::invalid_argument(
        "benchmark_iteration: need at least 10 measured iterations");
  Rng rng(1234);
  Tensor<float> batch({batch_size, 3, resolution, resolution});
  for (int64_t i = 0; i < batch.size(); ++i)
    batch[i] = static_cast<float>(rng.normal(0.0, 1.0));

  optim::OptimConfig cfg;
  cfg.kind = optim::OptKind::sgd;
  cfg.base_lr = 1e-4;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0;
  optim::Optimizer<float> opt(cfg, extractor.params().params());

  auto one_iteration = [&] {
    auto out = extractor.forward(batch, /*training=*/true);
    auto loss = ag::mean_all(out.embedding);
    opt.zero_grad();
    ag::backward(loss);
    opt.step(cfg.base_lr);
  };
  for (int64_t i = 0; i < warmup; ++i) one_iteration();
  auto start = std::chrono::steady_clock::now();
  for (int64_t i = 0; i < iterations; ++i) one_iteration();
  auto elapsed = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  return elapsed / static_cast<double>(iterations);
}

std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      size_t colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " threads";
}

ProfileReport profile_model(const backbones::BackboneSpec& spec,
                            int64_t resolution, int64_t batch_size,
                            int64_t iterations) {
  backbones::FeatureExtractor<float> extractor(spec, /*init_seed=*/1);
  ProfileReport report;
  report.family = backbones::to_string(spec.family);
  report.with_cbam = spec.with_cbam;
  report.resolution = resolution;
  report.batch_size = batch_size;
  report.hardware = hardware_descriptor();

  std::vector<LayerCost> param_side, flop_side;
  report.params = count_params(extractor, &param_side);
  report.flops = count_flops(extractor, resolution, &flop_side, &report.conv_macs);

  // Merge the two breakdowns on the block key.
  std::map<std::string, LayerCost> merged;
  for (const auto& l : param_side) {
    merged[l.name].name = l.name;
    merged[l.name].params = l.params;
  }
  for (const auto& l : flop_side) {
    merged[l.name].name = l.name;
    merged[l.name].flops = l.flops;
  }
  for (auto& [_, cost] : merged) report.layers.push_back(cost);

  if (iterations > 0)
    report.seconds_per_iteration =
        benchmark_iteration(extractor, batch_size, resolution, iterations);
  return report;
}

}  // namespace assl::profile
