#include "idrestore/parameters.hpp"

namespace idr {

nn::Var ParameterGroup::add(std::string name, nn::Tensor init) {
  nn::Var v = nn::parameter(std::move(init));
  v.set_requires_grad(trainable_);
  params_.push_back({std::move(name), v});
  return v;
}

const nn::Var* ParameterGroup::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p.var;
  return nullptr;
}

void ParameterGroup::set_trainable(bool on) {
  trainable_ = on;
  for (auto& p : params_) p.var.set_requires_grad(on);
}

void ParameterGroup::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParameterGroup::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

std::vector<double> ParameterGroup::snapshot() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) {
    auto v = p.var.value().values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

nn::Tensor random_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * standard_normal(rng);
  return t;
}

}  // namespace idr
