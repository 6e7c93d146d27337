#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idrestore/backbone.hpp"
#include "idrestore/identity_encoder.hpp"
#include "idrestore/image.hpp"

namespace idr {

inline constexpr const char* kIdEncoderGroup = "id_encoder";
inline constexpr const char* kControlGroup = "control";
inline constexpr const char* kDenoiserGroup = "denoiser";

struct ModelConfig {
  int image_size = 64;
  int latent_factor = 4;
  int timesteps = 1000;
  int token_dim = 64;
  int face_dim = 512;
  int crop_side = kDefaultCropSide;
  int embedder_grid = 8;
  int recognizer_grid = 28;
  std::string detector = "full_frame";
  std::string embedder = "projection";
  std::string recognizer = "projection";
  ToyDenoiserConfig denoiser;
  std::uint64_t seed = 0;

  void validate() const;
};

// Everything restoration and training need: the frozen backbones (detector,
// embedder, recognizer, text encoder, codec) and the three trainable groups.
class RestorationModel {
 public:
  explicit RestorationModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const LatentCodec& codec() const { return *codec_; }
  const FaceDetector& detector() const { return *detector_; }
  const ImageEmbedder& embedder() const { return *embedder_; }
  const FaceRecognizer& recognizer() const { return *recognizer_; }
  const TextEncoder& text_encoder() const { return *text_; }

  Denoiser& denoiser() { return *denoiser_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  ControlBranch& control() { return *control_; }
  const ControlBranch& control() const { return *control_; }
  FusionHead& id_encoder() { return *fusion_; }
  const FusionHead& id_encoder() const { return *fusion_; }

  // Replaces the denoiser (e.g. with a test stub).
  void set_denoiser(std::unique_ptr<Denoiser> denoiser) { denoiser_ = std::move(denoiser); }
  // Fresh control branch with the given seed.
  void reset_control(std::uint64_t seed);

  std::vector<ParameterGroup*> groups();
  ParameterGroup& group(std::string_view name);

  // c_text for the fixed prompt.
  const PromptEmbedding& text_prompt() const { return c_text_; }

  ReferenceFeatures reference_features(const Image& reference) const;
  // c_id for one or more references.
  PromptEmbedding identity_prompt(std::span<const ReferenceFeatures> references) const;

 private:
  ModelConfig config_;
  NoiseSchedule schedule_;
  std::unique_ptr<LatentCodec> codec_;
  std::unique_ptr<FaceDetector> detector_;
  std::unique_ptr<ImageEmbedder> embedder_;
  std::unique_ptr<FaceRecognizer> recognizer_;
  std::unique_ptr<TextEncoder> text_;
  std::unique_ptr<Denoiser> denoiser_;
  std::unique_ptr<ControlBranch> control_;
  std::unique_ptr<FusionHead> fusion_;
  PromptEmbedding c_text_;
};

// Backbone plug-ins known by name.
std::vector<std::string> registered_detectors();
std::vector<std::string> registered_embedders();
std::vector<std::string> registered_recognizers();

}  // namespace idr
