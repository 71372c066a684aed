#include "assl/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace assl::eval {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per;
  static const char* kNames[4] = {"Gable", "Hip", "Flat", "Complex"};
  for (int c = 0; c < 4; ++c) {
    per[kNames[c]] = {{"precision", per_class[c].precision},
                      {"recall", per_class[c].recall},
                      {"f1", per_class[c].f1},
                      {"precision_undefined", per_class[c].precision_undefined}};
  }
  nlohmann::json conf = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < 4; ++c) row.push_back(confusion[r][c]);
    conf.push_back(row);
  }
  return nlohmann::json{{"top1", top1},
                        {"per_class", per},
                        {"confusion", conf},
                        {"n", n},
                        {"seed", seed}};
}

EvalReport evaluate_report(const std::vector<int>& predictions,
                           const std::vector<int>& truth, uint64_t seed) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument(
        "evaluate_report: prediction/truth length mismatch (" +
        std::to_string(predictions.size()) + " vs " +
        std::to_string(truth.size()) + ")");
  EvalReport report;
  report.seed = seed;
  report.n = static_cast<int64_t>(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > 3 || predictions[i] < 0 || predictions[i] > 3)
      throw std::invalid_argument("evaluate_report: category code out of range");
    report.confusion[truth[i]][predictions[i]]++;
  }
  int64_t correct = 0;
  for (int c = 0; c < 4; ++c) correct += report.confusion[c][c];
  report.top1 = report.n > 0 ? static_cast<double>(correct) / report.n : 0.0;

  for (int c = 0; c < 4; ++c) {
    int64_t predicted = 0, actual = 0;
    for (int r = 0; r < 4; ++r) {
      predicted += report.confusion[r][c];
      actual += report.confusion[c][r];
    }
    auto& pc = report.per_class[c];
    if (predicted == 0) {
      pc.precision = 0;
      pc.precision_undefined = true;
    } else {
      pc.precision = static_cast<double>(report.confusion[c][c]) / predicted;
    }
    pc.recall =
        actual == 0 ? 0 : static_cast<double>(report.confusion[c][c]) / actual;
    pc.f1 = (pc.precision + pc.recall) > 0
                ? 2 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0;
  }
  return report;
}

RunAggregate aggregate_runs(const std::vector<double>& accuracies) {
  if (accuracies.empty())
    throw std::invalid_argument("aggregate_runs: no runs given");
  RunAggregate agg;
  double sum = 0;
  for (double a : accuracies) sum += a;
  agg.mean = sum / static_cast<double>(accuracies.size());
  if (accuracies.size() >= 2) {
    double sq = 0;
    for (double a : accuracies) sq += (a - agg.mean) * (a - agg.mean);
    agg.stddev = std::sqrt(sq / static_cast<double>(accuracies.size() - 1));
    agg.stddev_defined = true;
  }
  return agg;
}

}  // namespace assl::eval
