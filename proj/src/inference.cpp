#include "idrestore/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "idrestore/wavelet.hpp"

namespace idr {

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
  if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
  const int t = resolved_t_start(schedule);
  if (t < 1 || t > schedule.total_steps()) throw std::invalid_argument("sampler: t_start must be in [1, T]");
  if (!(lambda_cfg >= 0.0) || !std::isfinite(lambda_cfg)) throw std::invalid_argument("sampler: lambda_cfg must be >= 0");
  if (wavelet_levels < 0 || wavelet_levels > 16) throw std::invalid_argument("sampler: wavelet_levels must be in [0, 16]");
}

nn::Tensor init_latent(const nn::Tensor& lq_latent, const NoiseSchedule& schedule, int t_start, const nn::Tensor& eps) {
  if (t_start < 0 || t_start > schedule.total_steps()) throw std::invalid_argument("init_latent: t_start out of range");
  return add_noise(lq_latent, eps, t_start, schedule);
}

nn::Tensor init_latent(const nn::Tensor& lq_latent, const NoiseSchedule& schedule, int t_start, Rng& rng) {
  if (t_start < 0 || t_start > schedule.total_steps()) throw std::invalid_argument("init_latent: t_start out of range");
  nn::Tensor eps(lq_latent.shape());
  for (double& v : eps.values()) v = standard_normal(rng);
  return init_latent(lq_latent, schedule, t_start, eps);
}

nn::Tensor cfg_combine(const nn::Tensor& z_id, const nn::Tensor& z_uncond, double lambda_cfg) {
  if (z_id.shape() != z_uncond.shape()) throw std::invalid_argument("cfg_combine: shape mismatch");
  nn::Tensor out(z_id.shape());
  auto o = out.values();
  const auto a = z_id.values(), u = z_uncond.values();
  // Same affine combination, written so lambda = 0 and lambda = 1 are exact.
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - lambda_cfg) * u[i] + lambda_cfg * a[i];
  return out;
}

std::vector<int> sampling_timesteps(int t_start, int steps) {
  if (t_start < 1 || steps < 1) throw std::invalid_argument("sampling_timesteps: t_start and steps must be >= 1");
  std::vector<int> ts;
  for (int i = 0; i < steps; ++i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(t_start) * (steps - i) / steps));
    if (t >= 1 && (ts.empty() || t < ts.back())) ts.push_back(t);
  }
  return ts;
}

nn::Tensor ddim_step(const nn::Tensor& z_t, const nn::Tensor& eps_hat, int t, int t_prev, const NoiseSchedule& schedule) {
  if (z_t.shape() != eps_hat.shape()) throw std::invalid_argument("ddim_step: shape mismatch");
  const double a = schedule.alpha_bar(t), a_prev = schedule.alpha_bar(t_prev);
  const double sa = std::sqrt(a), s1a = std::sqrt(1.0 - a);
  const double sp = std::sqrt(a_prev), s1p = std::sqrt(1.0 - a_prev);
  nn::Tensor out(z_t.shape());
  auto o = out.values();
  const auto z = z_t.values(), e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0 = std::clamp((z[i] - s1a * e[i]) / sa, -1.0, 1.0);
    const double eps = s1a > 1e-12 ? (z[i] - sa * x0) / s1a : e[i];
    o[i] = sp * x0 + s1p * eps;
  }
  return out;
}

namespace {

nn::Tensor predict(const RestorationModel& model, const nn::Tensor& z, int t, const PromptEmbedding& cond,
                   const ControlSignal& control) {
  return predict_noise(model.denoiser(), nn::constant(z), t, cond, &control, model.schedule()).value();
}

}  // namespace

RestoreResult restore(const Image& lq, std::span<const ReferenceFeatures> references,
                      const RestorationModel& model, const SamplerConfig& config) {
  const NoiseSchedule& schedule = model.schedule();
  config.validate(schedule);
  nn::NoGradGuard no_grad;

  RestoreResult result;
  result.references_used = static_cast<int>(references.size());
  result.conditional = !references.empty();

  const nn::Tensor lq_latent = model.codec().encode(lq);
  const ControlSignal control = model.control().encode(lq_latent);
  const PromptEmbedding& c_text = model.text_prompt();
  std::optional<PromptEmbedding> c_id;
  if (result.conditional) c_id = model.identity_prompt(references);

  Rng rng(config.seed);
  const int t_start = config.resolved_t_start(schedule);
  nn::Tensor z = init_latent(lq_latent, schedule, t_start, rng);

  const auto ts = sampling_timesteps(t_start, config.steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    const nn::Tensor eps_u = predict(model, z, t, c_text, control);
    if (!c_id) {
      z = ddim_step(z, eps_u, t, t_prev, schedule);
      continue;
    }
    const nn::Tensor eps_id = predict(model, z, t, *c_id, control);
    if (config.noise_space_cfg) {
      z = ddim_step(z, cfg_combine(eps_id, eps_u, config.lambda_cfg), t, t_prev, schedule);
    } else {
      z = cfg_combine(ddim_step(z, eps_id, t, t_prev, schedule), ddim_step(z, eps_u, t, t_prev, schedule),
                      config.lambda_cfg);
    }
  }

  Image out = model.codec().decode(z, lq.height(), lq.width());
  if (config.color_correction) out = wavelet_color_correct(out, lq, config.wavelet_levels);
  result.image = std::move(out);
  return result;
}

RestoreResult restore(const Image& lq, std::span<const Image> references, const RestorationModel& model,
                      const SamplerConfig& config) {
  std::vector<ReferenceFeatures> features;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < references.size(); ++i) {
    try {
      features.push_back(model.reference_features(references[i]));
    } catch (const NoFaceError& e) {
      warnings.push_back("reference " + std::to_string(i) + " skipped: " + e.what());
    }
  }
  RestoreResult result = restore(lq, std::span<const ReferenceFeatures>(features), model, config);
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
  return result;
}

}  // namespace idr
