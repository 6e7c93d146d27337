#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "idrestore/parameters.hpp"

namespace idr {

struct AdamWConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
};

// Adam with decoupled weight decay. Only groups passed to step() move.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}
  void step(std::span<ParameterGroup* const> groups);
  long long steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamWConfig config_;
  long long step_ = 0;
  std::unordered_map<const nn::Node*, Moments> state_;
};

}  // namespace idr
