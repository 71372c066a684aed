#pragma once

#include <string>

#include "assl/train/config_json.hpp"

namespace assl::cli {

/// One run's fully resolved configuration: model/method/optimizer/schedule
/// sections plus data paths and the output directory. File values override
/// defaults; command-line flags override the file.
struct RunConfig {
  train::RunSnapshot snap;
  std::string train_data;
  std::string val_data;
  std::string out_dir = "run_out";
  int64_t save_every = 10;
};

/// Thrown for malformed configuration (maps to the usage exit code).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parses a config document, rejecting unknown keys at every level.
RunConfig load_run_config(const std::string& json_path);
RunConfig run_config_from_json(const train::json& j);

}  // namespace assl::cli
