#include "idrestore/optimizer.hpp"

#include <cmath>

namespace idr {

void AdamW::step(std::span<ParameterGroup* const> groups) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (ParameterGroup* g : groups) {
    for (auto& p : g->params()) {
      nn::Var& var = p.var;
      const nn::Tensor& grad = var.grad();
      if (grad.size() != var.size()) continue;  // no gradient reached this tensor
      Moments& mo = state_[var.node().get()];
      if (mo.m.empty()) {
        mo.m.assign(var.size(), 0.0);
        mo.v.assign(var.size(), 0.0);
      }
      auto values = var.mutable_value().values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double gi = grad[i];
        mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * gi;
        mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * gi * gi;
        const double mhat = mo.m[i] / bc1;
        const double vhat = mo.v[i] / bc2;
        values[i] -= config_.learning_rate * (mhat / (std::sqrt(vhat) + config_.epsilon) + config_.weight_decay * values[i]);
      }
    }
  }
}

}  // namespace idr
