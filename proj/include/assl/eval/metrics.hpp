#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace assl::eval {

/// Accuracy, per-category metrics, and the 4x4 confusion matrix (rows are
/// ground truth, columns predictions) for one labeled split.
struct EvalReport {
  struct PerClass {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    bool precision_undefined = false;  // category never predicted
  };

  double top1 = 0;
  std::array<PerClass, 4> per_class{};
  std::array<std::array<int64_t, 4>, 4> confusion{};
  int64_t n = 0;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Tallies predictions against truth; lengths must match.
EvalReport evaluate_report(const std::vector<int>& predictions,
                           const std::vector<int>& truth, uint64_t seed = 0);

struct RunAggregate {
  double mean = 0;
  double stddev = 0;          // Bessel-corrected
  bool stddev_defined = false;  // needs at least 2 runs
};

RunAggregate aggregate_runs(const std::vector<double>& accuracies);

}  // namespace assl::eval
