#pragma once

#include <memory>
#include <vector>

#include "idrestore/autograd.hpp"
#include "idrestore/image.hpp"
#include "idrestore/parameters.hpp"
#include "idrestore/prompt.hpp"

namespace idr {

// Cumulative signal coefficients alpha_bar(t) for t in [0, T].
class NoiseSchedule {
 public:
  // Cosine schedule with per-step betas capped at 0.999; alpha_bar(0) = 1 and
  // alpha_bar(T) is of order 1e-9.
  static NoiseSchedule cosine(int total_steps, double offset = 0.008);

  // Table must be monotonically non-increasing with total_steps + 1 entries.
  explicit NoiseSchedule(std::vector<double> alpha_bar);
  NoiseSchedule() : NoiseSchedule(cosine(1000)) {}

  int total_steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;

 private:
  std::vector<double> alpha_bar_;
};

// z_t = sqrt(alpha_bar(t)) z0 + sqrt(1 - alpha_bar(t)) eps
nn::Tensor add_noise(const nn::Tensor& z0, const nn::Tensor& eps, int t, const NoiseSchedule& schedule);

// Image <-> latent mapping. The toy codec is a plain 4x bicubic downscale
// rescaled to [-1, 1]; there is no learned autoencoder.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual nn::Tensor encode(const Image& image) const = 0;
  virtual Image decode(const nn::Tensor& latent, int height, int width) const = 0;
};

class DownscaleCodec final : public LatentCodec {
 public:
  explicit DownscaleCodec(int factor = 4) : factor_(factor) {}
  nn::Tensor encode(const Image& image) const override;
  Image decode(const nn::Tensor& latent, int height, int width) const override;
  int factor() const { return factor_; }

 private:
  int factor_;
};

// Per-block feature residuals injected into the denoiser.
struct ControlSignal {
  std::vector<nn::Var> residuals;
};

class ControlBranch {
 public:
  virtual ~ControlBranch() = default;
  virtual ControlSignal encode(const nn::Tensor& lq_latent) const = 0;
  virtual ParameterGroup& parameters() = 0;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  // Predicted noise with the shape of z_t.
  virtual nn::Var forward(const nn::Var& z_t, int t, const PromptEmbedding& condition,
                          const ControlSignal* control) const = 0;
  virtual ParameterGroup& parameters() = 0;
};

// Validates inputs and output shape around Denoiser::forward.
nn::Var predict_noise(const Denoiser& denoiser, const nn::Var& z_t, int t,
                      const PromptEmbedding& condition, const ControlSignal* control,
                      const NoiseSchedule& schedule);

struct ToyDenoiserConfig {
  int latent_channels = 3;
  int channels = 16;
  int blocks = 4;
  int attention_block = 1;
  int token_dim = 64;
  int key_dim = 16;
  int time_features = 8;
};

// Small conv noise predictor: input conv, residual conv blocks with additive
// time bias and control residuals, one cross-attention layer over the prompt,
// and an output conv F. The prediction is
//   eps_hat = sqrt(1 - alpha_bar) z_t + sqrt(alpha_bar) F,
// so the implied clean estimate sqrt(alpha_bar) z_t - sqrt(1 - alpha_bar) F
// never divides by a vanishing coefficient.
class ToyDenoiser final : public Denoiser {
 public:
  ToyDenoiser(const ToyDenoiserConfig& config, const NoiseSchedule& schedule, std::uint64_t seed);

  nn::Var forward(const nn::Var& z_t, int t, const PromptEmbedding& condition,
                  const ControlSignal* control) const override;
  ParameterGroup& parameters() override { return params_; }
  const ToyDenoiserConfig& config() const { return config_; }

 private:
  nn::Tensor time_features(int t) const;

  ToyDenoiserConfig config_;
  NoiseSchedule schedule_;
  ParameterGroup params_{"denoiser"};
  nn::Var in_w_, in_b_, out_w_, out_b_;
  std::vector<nn::Var> block_w_, block_b_, time_w_, time_b_;
  nn::Var wq_, wk_, wv_;
};

// LQ latent -> two conv layers -> one zero-initialized 1x1 projection per
// denoiser block.
class ToyControlBranch final : public ControlBranch {
 public:
  ToyControlBranch(const ToyDenoiserConfig& config, std::uint64_t seed);
  ControlSignal encode(const nn::Tensor& lq_latent) const override;
  ParameterGroup& parameters() override { return params_; }

 private:
  ToyDenoiserConfig config_;
  ParameterGroup params_{"control"};
  nn::Var c1_w_, c1_b_, c2_w_, c2_b_;
  std::vector<nn::Var> zero_w_, zero_b_;
};

}  // namespace idr
