#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "idrestore/autograd.hpp"
#include "idrestore/rng.hpp"

namespace idr::test {

struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double worst_relative = 0.0;
};

// Relative error |a - n| / max(|a|, |n|); pairs where both sides are below
// `floor` are compared absolutely against tol * floor instead.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-7) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < floor) return std::abs(analytic - numeric) / floor;
  return std::abs(analytic - numeric) / scale;
}

// Compares backward() against central differences at `count` randomly chosen
// scalar entries of `params`.
inline GradCheckResult gradient_check(const std::function<nn::Var()>& loss_fn, std::vector<nn::Var> params, int count,
                                      Rng& rng, double h = 1e-5, double tol = 1e-3) {
  for (auto& p : params) p.zero_grad();
  nn::backward(loss_fn());
  std::vector<nn::Tensor> analytic;
  for (auto& p : params) analytic.push_back(p.grad().size() ? p.grad() : nn::Tensor(p.shape()));

  GradCheckResult r;
  for (int i = 0; i < count; ++i) {
    const int pi = uniform_int(rng, 0, static_cast<int>(params.size()) - 1);
    nn::Var& p = params[pi];
    const int k = uniform_int(rng, 0, static_cast<int>(p.size()) - 1);
    const double orig = p.value()[k];
    p.mutable_value()[k] = orig + h;
    const double up = loss_fn().value()[0];
    p.mutable_value()[k] = orig - h;
    const double down = loss_fn().value()[0];
    p.mutable_value()[k] = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel = gradient_relative_error(analytic[pi][k], numeric);
    r.worst_relative = std::max(r.worst_relative, rel);
    ++r.checked;
    if (rel > tol) ++r.failed;
  }
  for (auto& p : params) p.zero_grad();
  return r;
}

}  // namespace idr::test
