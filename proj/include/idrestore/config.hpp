#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "idrestore/degradation.hpp"
#include "idrestore/inference.hpp"
#include "idrestore/metrics.hpp"
#include "idrestore/model.hpp"
#include "idrestore/refpool.hpp"
#include "idrestore/training.hpp"

namespace idr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoolConfig {
  int c1 = 8;
  int c2 = 4;
  IdentityGateConfig gate;
  int references_per_image = 4;
};

struct MetricConfig {
  SsimOptions ssim;
  int landmarks = 5;
  std::vector<ExternalMetric> external;
};

struct AppConfig {
  std::uint64_t seed = 0;
  int jobs = 0;  // 0: all available cores
  DegradationRanges degradation;
  PoolConfig pool;
  ModelConfig model;
  TrainingConfig training;
  SamplerConfig sampler;
  MetricConfig metrics;

  // Checks every section against its module's invariants.
  void validate() const;
  int resolved_jobs() const;
};

// Unknown keys and wrongly typed values are ConfigErrors naming the key path.
AppConfig parse_config(const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const AppConfig& config);

}  // namespace idr
