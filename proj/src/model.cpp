#include "idrestore/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace idr {

namespace {

std::unique_ptr<FaceDetector> make_detector(const ModelConfig& c) {
  if (c.detector == "full_frame") return std::make_unique<FullFrameDetector>();
  throw std::invalid_argument("unknown detector backbone '" + c.detector + "'");
}

std::unique_ptr<ImageEmbedder> make_embedder(const ModelConfig& c) {
  if (c.embedder == "projection") return std::make_unique<ProjectionEmbedder>(c.token_dim, c.embedder_grid, derive_seed(c.seed, 11));
  throw std::invalid_argument("unknown embedder backbone '" + c.embedder + "'");
}

std::unique_ptr<FaceRecognizer> make_recognizer(const ModelConfig& c) {
  if (c.recognizer == "projection") return std::make_unique<ProjectionRecognizer>(c.face_dim, c.recognizer_grid, derive_seed(c.seed, 12));
  throw std::invalid_argument("unknown recognizer backbone '" + c.recognizer + "'");
}

}  // namespace

std::vector<std::string> registered_detectors() { return {"full_frame"}; }
std::vector<std::string> registered_embedders() { return {"projection"}; }
std::vector<std::string> registered_recognizers() { return {"projection"}; }

void ModelConfig::validate() const {
  if (image_size < 4 || latent_factor < 1 || image_size % latent_factor != 0) {
    throw std::invalid_argument("model: image_size must be a positive multiple of latent_factor");
  }
  if (timesteps < 1) throw std::invalid_argument("model: timesteps must be >= 1");
  if (token_dim < 1 || face_dim < 1 || crop_side < 1) throw std::invalid_argument("model: dimensions must be positive");
  if (denoiser.token_dim != token_dim) throw std::invalid_argument("model: denoiser token_dim must equal token_dim");
  if (denoiser.time_features < 2 || denoiser.time_features % 2) throw std::invalid_argument("model: time_features must be even");
}

RestorationModel::RestorationModel(const ModelConfig& config)
    : config_(config), schedule_(NoiseSchedule::cosine(config.timesteps)) {
  config_.validate();
  codec_ = std::make_unique<DownscaleCodec>(config.latent_factor);
  detector_ = make_detector(config);
  embedder_ = make_embedder(config);
  recognizer_ = make_recognizer(config);
  text_ = std::make_unique<ToyTextEncoder>(config.token_dim, derive_seed(config.seed, 13));
  denoiser_ = std::make_unique<ToyDenoiser>(config.denoiser, schedule_, derive_seed(config.seed, 14));
  control_ = std::make_unique<ToyControlBranch>(config.denoiser, derive_seed(config.seed, 15));
  fusion_ = std::make_unique<MlpFusionHead>(config.token_dim, config.face_dim, derive_seed(config.seed, 16));
  c_text_ = text_->encode(kFixedPrompt, kIdentityWord);
}

void RestorationModel::reset_control(std::uint64_t seed) {
  const bool trainable = control_->parameters().trainable();
  control_ = std::make_unique<ToyControlBranch>(config_.denoiser, seed);
  control_->parameters().set_trainable(trainable);
}

std::vector<ParameterGroup*> RestorationModel::groups() {
  return {&fusion_->parameters(), &control_->parameters(), &denoiser_->parameters()};
}

ParameterGroup& RestorationModel::group(std::string_view name) {
  for (ParameterGroup* g : groups())
    if (g->name() == name) return *g;
  throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

ReferenceFeatures RestorationModel::reference_features(const Image& reference) const {
  FaceCrop crop = detect_and_crop(reference, *detector_, config_.crop_side);
  return extract_reference_features(crop, *embedder_, *recognizer_);
}

PromptEmbedding RestorationModel::identity_prompt(std::span<const ReferenceFeatures> references) const {
  std::vector<IdentityEmbedding> rows;
  rows.reserve(references.size());
  for (const auto& r : references) rows.push_back(encode_identity(r, *fusion_));
  return replace_token(c_text_, combine(rows));
}

}  // namespace idr
