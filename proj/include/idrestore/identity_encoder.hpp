#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "idrestore/autograd.hpp"
#include "idrestore/image.hpp"
#include "idrestore/parameters.hpp"
#include "idrestore/prompt.hpp"

namespace idr {

struct Box {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long long area() const { return static_cast<long long>(width) * height; }
  friend bool operator==(const Box&, const Box&) = default;
};

class NoFaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<Box> detect(const Image& image) const = 0;
};

// Reports the whole frame as one face unless the frame is flat. Suitable for
// pre-aligned inputs.
class FullFrameDetector final : public FaceDetector {
 public:
  std::vector<Box> detect(const Image& image) const override;
};

// Returns a fixed list of boxes regardless of content.
class FixedBoxDetector final : public FaceDetector {
 public:
  explicit FixedBoxDetector(std::vector<Box> boxes) : boxes_(std::move(boxes)) {}
  std::vector<Box> detect(const Image&) const override { return boxes_; }

 private:
  std::vector<Box> boxes_;
};

struct FaceCrop {
  Image image;  // side x side
  Box source;   // region of the original image, clipped to its bounds
  bool center_fallback = false;
};

inline constexpr int kDefaultCropSide = 112;

// Largest detected face (ties: leftmost, then topmost), resized to side x side.
// Throws NoFaceError when the detector reports nothing.
FaceCrop detect_and_crop(const Image& image, const FaceDetector& detector, int side = kDefaultCropSide);

// As above, but falls back to the central square and marks the crop.
FaceCrop detect_and_crop_or_center(const Image& image, const FaceDetector& detector, int side = kDefaultCropSide);

// CLIP-like image features f in R^d.
class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual std::vector<double> embed(const FaceCrop& crop) const = 0;
  virtual int dim() const = 0;
};

// Face-recognition features g in R^512.
class FaceRecognizer {
 public:
  virtual ~FaceRecognizer() = default;
  virtual std::vector<double> features(const FaceCrop& crop) const = 0;
  virtual int dim() const = 0;
};

// Fixed random projection of the crop resampled to grid x grid, with the
// per-channel mean removed and the vector scaled to unit length. Entries of
// the output are O(1).
class ProjectionEmbedder final : public ImageEmbedder {
 public:
  ProjectionEmbedder(int dim, int grid, std::uint64_t seed);
  std::vector<double> embed(const FaceCrop& crop) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  int grid_;
  std::vector<double> projection_;
};

class ProjectionRecognizer final : public FaceRecognizer {
 public:
  ProjectionRecognizer(int dim, int grid, std::uint64_t seed);
  std::vector<double> features(const FaceCrop& crop) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  int grid_;
  std::vector<double> projection_;
};

// The trainable identity encoder: align g -> g_hat in R^d, then fuse
// (g_hat, f) -> s in R^d.
class FusionHead {
 public:
  virtual ~FusionHead() = default;
  virtual nn::Var fuse(const std::vector<double>& clip_features, const std::vector<double>& face_features) const = 0;
  virtual ParameterGroup& parameters() = 0;
  virtual int dim() const = 0;
};

// align: 512 -> d -> d (GELU); fuse: concat(g_hat, f) 2d -> d -> d (GELU).
class MlpFusionHead final : public FusionHead {
 public:
  MlpFusionHead(int dim, int face_dim, std::uint64_t seed);
  nn::Var fuse(const std::vector<double>& clip_features, const std::vector<double>& face_features) const override;
  ParameterGroup& parameters() override { return params_; }
  int dim() const override { return dim_; }

 private:
  int dim_;
  int face_dim_;
  ParameterGroup params_{"id_encoder"};
  nn::Var a1_w_, a1_b_, a2_w_, a2_b_, f1_w_, f1_b_, f2_w_, f2_b_;
};

// s_i as a [1, d] row (differentiable w.r.t. the fusion head).
struct IdentityEmbedding {
  nn::Var row;
  int dim() const { return row.value().dim(1); }
};

// s in R^{N x d}.
struct StackedIdentity {
  nn::Var rows;
  int count() const { return rows.value().dim(0); }
  int dim() const { return rows.value().dim(1); }
};

// Backbone outputs for one reference, computed once and reused.
struct ReferenceFeatures {
  std::vector<double> clip;
  std::vector<double> face;
};

ReferenceFeatures extract_reference_features(const FaceCrop& crop, const ImageEmbedder& embedder,
                                             const FaceRecognizer& recognizer);

IdentityEmbedding encode_identity(const FaceCrop& crop, const ImageEmbedder& embedder,
                                  const FaceRecognizer& recognizer, const FusionHead& fusion);
IdentityEmbedding encode_identity(const ReferenceFeatures& features, const FusionHead& fusion);

StackedIdentity combine(std::span<const IdentityEmbedding> embeddings);

// Splices s over the replaceable token: {e1 .. e_{k-1}, s_1 .. s_N, e_{k+1} ..}.
PromptEmbedding replace_token(const PromptEmbedding& c_text, const StackedIdentity& s);

// Rows occupying the replaced span.
nn::Tensor extract_span(const PromptEmbedding& c_id);

}  // namespace idr
