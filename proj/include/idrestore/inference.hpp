#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idrestore/model.hpp"

namespace idr {

struct SamplerConfig {
  int steps = 50;
  std::optional<int> t_start;  // defaults to T
  double lambda_cfg = 2.0;
  std::uint64_t seed = 0;
  // Combine noise predictions instead of next-step latents.
  bool noise_space_cfg = false;
  bool color_correction = true;
  int wavelet_levels = 5;

  int resolved_t_start(const NoiseSchedule& schedule) const { return t_start.value_or(schedule.total_steps()); }
  void validate(const NoiseSchedule& schedule) const;
};

// z = sqrt(alpha_bar(t_start)) latent + sqrt(1 - alpha_bar(t_start)) eps.
nn::Tensor init_latent(const nn::Tensor& lq_latent, const NoiseSchedule& schedule, int t_start, const nn::Tensor& eps);
nn::Tensor init_latent(const nn::Tensor& lq_latent, const NoiseSchedule& schedule, int t_start, Rng& rng);

// z_uncond + lambda (z_id - z_uncond), exact at lambda = 0 and 1.
nn::Tensor cfg_combine(const nn::Tensor& z_id, const nn::Tensor& z_uncond, double lambda_cfg);

// Visited timesteps, strictly decreasing from t_start; the loop then steps
// from the last one to t = 0.
std::vector<int> sampling_timesteps(int t_start, int steps);

// Deterministic (eta = 0) update from t to t_prev given a noise prediction.
// The implied clean latent is clipped to [-1, 1].
nn::Tensor ddim_step(const nn::Tensor& z_t, const nn::Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& schedule);

struct RestoreResult {
  Image image;
  int references_used = 0;
  bool conditional = false;
  std::vector<std::string> warnings;
};

// References without a detectable face are skipped with a warning; with none
// left the unconditional path runs alone (no CFG).
RestoreResult restore(const Image& lq, std::span<const Image> references, const RestorationModel& model,
                      const SamplerConfig& config);
RestoreResult restore(const Image& lq, std::span<const ReferenceFeatures> references,
                      const RestorationModel& model, const SamplerConfig& config);

}  // namespace idr
