#pragma once

// Run configuration: one JSON document covering data generation, training,
// losses, inference and evaluation. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "ptal/inference.hpp"
#include "ptal/metrics.hpp"
#include "ptal/synthio.hpp"
#include "ptal/trainer.hpp"

namespace ptal::config {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: available cores
  synthio::SyntheticSpec data;
  trainer::TrainConfig train;  // train.loss holds the loss settings
  inference::InferenceConfig inference;
  std::vector<double> eval_thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

  // Copies the top-level seed and worker count into the sections and
  // validates each of them.
  void finalize();
};

RunConfig from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);
RunConfig load(const std::filesystem::path& path);

}  // namespace ptal::config
