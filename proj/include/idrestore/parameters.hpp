#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "idrestore/autograd.hpp"
#include "idrestore/rng.hpp"

namespace idr {

struct NamedParameter {
  std::string name;
  nn::Var var;
};

// A named set of trainable tensors ("id_encoder", "control", "denoiser").
class ParameterGroup {
 public:
  explicit ParameterGroup(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  nn::Var add(std::string name, nn::Tensor init);

  std::vector<NamedParameter>& params() { return params_; }
  const std::vector<NamedParameter>& params() const { return params_; }
  const nn::Var* find(std::string_view name) const;

  // Frozen groups do not participate in the backward pass at all.
  void set_trainable(bool on);
  bool trainable() const { return trainable_; }
  void zero_grad();
  std::size_t scalar_count() const;

  // Flattened copy of every value, in registration order.
  std::vector<double> snapshot() const;

 private:
  std::string name_;
  std::vector<NamedParameter> params_;
  bool trainable_ = true;
};

// N(0, stddev^2) entries.
nn::Tensor random_tensor(std::vector<int> shape, double stddev, Rng& rng);

}  // namespace idr
