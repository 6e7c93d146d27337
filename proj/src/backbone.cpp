#include "idrestore/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace idr {

NoiseSchedule NoiseSchedule::cosine(int total_steps, double offset) {
  if (total_steps < 1) throw std::invalid_argument("NoiseSchedule: total_steps must be >= 1");
  auto f = [&](int t) {
    const double x = (static_cast<double>(t) / total_steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
    return std::cos(x) * std::cos(x);
  };
  // Per-step betas are capped at 0.999, which keeps alpha_bar(T) tiny but
  // nonzero so the clean-signal estimate stays well defined at t = T.
  std::vector<double> table(total_steps + 1);
  table[0] = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    table[t] = table[t - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(table));
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) throw std::invalid_argument("NoiseSchedule: need at least two entries");
  for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
    if (!(alpha_bar_[i] >= 0.0 && alpha_bar_[i] <= 1.0)) throw std::invalid_argument("NoiseSchedule: alpha_bar outside [0, 1]");
    if (i && alpha_bar_[i] > alpha_bar_[i - 1]) throw std::invalid_argument("NoiseSchedule: alpha_bar must be non-increasing");
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > total_steps()) throw std::invalid_argument("timestep out of range");
  return alpha_bar_[t];
}

nn::Tensor add_noise(const nn::Tensor& z0, const nn::Tensor& eps, int t, const NoiseSchedule& schedule) {
  if (z0.shape() != eps.shape()) throw std::invalid_argument("add_noise: shape mismatch");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  nn::Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

nn::Tensor DownscaleCodec::encode(const Image& image) const {
  const int h = std::max(1, image.height() / factor_);
  const int w = std::max(1, image.width() / factor_);
  Image small = resize_bicubic(image, h, w);
  const int ch = image.channels();
  nn::Tensor latent({ch, h, w});
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        latent[(static_cast<std::size_t>(c) * h + y) * w + x] = 2.0 * small.at(y, x, c) - 1.0;
  return latent;
}

Image DownscaleCodec::decode(const nn::Tensor& latent, int height, int width) const {
  if (latent.rank() != 3) throw std::invalid_argument("DownscaleCodec: expected [C,H,W] latent");
  const int ch = latent.dim(0), h = latent.dim(1), w = latent.dim(2);
  Image small(h, w, ch);
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        small.at(y, x, c) = 0.5 * (latent[(static_cast<std::size_t>(c) * h + y) * w + x] + 1.0);
  Image out = resize_bicubic(small, height, width);
  out.clamp01();
  return out;
}

nn::Var predict_noise(const Denoiser& denoiser, const nn::Var& z_t, int t,
                      const PromptEmbedding& condition, const ControlSignal* control,
                      const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.total_steps()) throw std::invalid_argument("predict_noise: timestep out of range");
  if (!condition.tokens.defined() || condition.length() < 1) {
    throw std::invalid_argument("predict_noise: empty condition");
  }
  if (condition.token_index < 0 || condition.token_index + condition.span_length > condition.length()) {
    throw std::invalid_argument("predict_noise: condition token span out of range");
  }
  nn::Var out = denoiser.forward(z_t, t, condition, control);
  if (out.shape() != z_t.shape()) {
    throw std::invalid_argument("predict_noise: denoiser returned shape " + nn::shape_string(out.shape()) +
                                " for input " + nn::shape_string(z_t.shape()));
  }
  return out;
}

namespace {

nn::Tensor conv_init(int out, int in, int k, Rng& rng) {
  return random_tensor({out, in, k, k}, std::sqrt(1.0 / (in * k * k)), rng);
}

}  // namespace

ToyDenoiser::ToyDenoiser(const ToyDenoiserConfig& config, const NoiseSchedule& schedule, std::uint64_t seed)
    : config_(config), schedule_(schedule) {
  if (config.blocks < 1 || config.attention_block < 0 || config.attention_block >= config.blocks) {
    throw std::invalid_argument("ToyDenoiser: invalid block layout");
  }
  Rng rng(seed);
  const int C = config.channels;
  const int L = config.latent_channels;
  in_w_ = params_.add("in.w", conv_init(C, L, 3, rng));
  in_b_ = params_.add("in.b", nn::Tensor({C}));
  for (int b = 0; b < config.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    block_w_.push_back(params_.add(p + ".conv.w", conv_init(C, C, 3, rng)));
    block_b_.push_back(params_.add(p + ".conv.b", nn::Tensor({C})));
    time_w_.push_back(params_.add(p + ".time.w", random_tensor({config.time_features, C}, std::sqrt(1.0 / config.time_features), rng)));
    time_b_.push_back(params_.add(p + ".time.b", nn::Tensor({C})));
  }
  wq_ = params_.add("attn.q", random_tensor({C, config.key_dim}, std::sqrt(1.0 / C), rng));
  wk_ = params_.add("attn.k", random_tensor({config.token_dim, config.key_dim}, std::sqrt(1.0 / config.token_dim), rng));
  wv_ = params_.add("attn.v", random_tensor({config.token_dim, C}, 0.1 * std::sqrt(1.0 / config.token_dim), rng));
  out_w_ = params_.add("out.w", conv_init(L, C, 3, rng));
  out_b_ = params_.add("out.b", nn::Tensor({L}));
}

nn::Tensor ToyDenoiser::time_features(int t) const {
  const int n = config_.time_features;
  nn::Tensor f({1, n});
  const double u = static_cast<double>(t) / schedule_.total_steps();
  for (int i = 0; i < n / 2; ++i) {
    const double freq = std::numbers::pi * std::pow(2.0, i) / 2.0;
    f[2 * i] = std::sin(freq * u);
    f[2 * i + 1] = std::cos(freq * u);
  }
  return f;
}

nn::Var ToyDenoiser::forward(const nn::Var& z_t, int t, const PromptEmbedding& condition,
                             const ControlSignal* control) const {
  if (z_t.value().rank() != 3 || z_t.value().dim(0) != config_.latent_channels) {
    throw std::invalid_argument("ToyDenoiser: expected latent [" + std::to_string(config_.latent_channels) +
                                ",H,W], got " + nn::shape_string(z_t.shape()));
  }
  if (condition.dim() != config_.token_dim) throw std::invalid_argument("ToyDenoiser: condition token dim mismatch");
  if (control && static_cast<int>(control->residuals.size()) != config_.blocks) {
    throw std::invalid_argument("ToyDenoiser: control residual count mismatch");
  }
  const nn::Var tf = nn::constant(time_features(t));
  nn::Var h = nn::conv2d(z_t, in_w_, in_b_);
  for (int b = 0; b < config_.blocks; ++b) {
    nn::Var u = nn::conv2d(nn::gelu(h), block_w_[b], block_b_[b]);
    u = nn::add_channel_bias(u, nn::linear(tf, time_w_[b], time_b_[b]));
    h = nn::add(h, u);
    if (control) h = nn::add(h, control->residuals[b]);
    if (b == config_.attention_block) h = nn::add(h, nn::cross_attention(h, condition.tokens, wq_, wk_, wv_));
  }
  nn::Var f = nn::conv2d(nn::gelu(h), out_w_, out_b_);
  const double ab = schedule_.alpha_bar(t);
  return nn::add(nn::scale(z_t, std::sqrt(1.0 - ab)), nn::scale(f, std::sqrt(ab)));
}

ToyControlBranch::ToyControlBranch(const ToyDenoiserConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  const int C = config.channels;
  c1_w_ = params_.add("conv1.w", conv_init(C, config.latent_channels, 3, rng));
  c1_b_ = params_.add("conv1.b", nn::Tensor({C}));
  c2_w_ = params_.add("conv2.w", conv_init(C, C, 3, rng));
  c2_b_ = params_.add("conv2.b", nn::Tensor({C}));
  for (int b = 0; b < config.blocks; ++b) {
    const std::string p = "zero" + std::to_string(b);
    zero_w_.push_back(params_.add(p + ".w", nn::Tensor({C, C, 1, 1})));
    zero_b_.push_back(params_.add(p + ".b", nn::Tensor({C})));
  }
}

ControlSignal ToyControlBranch::encode(const nn::Tensor& lq_latent) const {
  if (lq_latent.rank() != 3 || lq_latent.dim(0) != config_.latent_channels) {
    throw std::invalid_argument("ToyControlBranch: unexpected latent shape " + nn::shape_string(lq_latent.shape()));
  }
  nn::Var x = nn::constant(lq_latent);
  nn::Var c = nn::gelu(nn::conv2d(x, c1_w_, c1_b_));
  c = nn::gelu(nn::conv2d(c, c2_w_, c2_b_));
  ControlSignal signal;
  for (int b = 0; b < config_.blocks; ++b) signal.residuals.push_back(nn::conv2d(c, zero_w_[b], zero_b_[b]));
  return signal;
}

}  // namespace idr
