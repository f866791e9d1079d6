#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "vnt/model.hpp"

namespace vnt {

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::size_t sched_step = 20;
  double sched_gamma = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);

/// Reads model keys from `j`; keys it does not know are ignored so one
/// file can carry both model and training settings.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Combined config file: every key must be a known model or training key.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j);

}  // namespace vnt
