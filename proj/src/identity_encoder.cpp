#include "idrestore/identity_encoder.hpp"

#include <algorithm>
#include <cmath>

namespace idr {

std::vector<Box> FullFrameDetector::detect(const Image& image) const {
  if (image.empty()) return {};
  // A frame with no contrast at all holds no face.
  const auto [lo, hi] = std::minmax_element(image.values().begin(), image.values().end());
  if (*hi - *lo < 1e-6) return {};
  return {Box{0, 0, image.width(), image.height()}};
}

namespace {

Box clip_box(const Box& b, const Image& image) {
  const int x0 = std::clamp(b.x, 0, image.width());
  const int y0 = std::clamp(b.y, 0, image.height());
  const int x1 = std::clamp(b.x + b.width, 0, image.width());
  const int y1 = std::clamp(b.y + b.height, 0, image.height());
  return Box{x0, y0, x1 - x0, y1 - y0};
}

FaceCrop crop_box(const Image& image, const Box& box, int side) {
  FaceCrop out;
  out.source = box;
  out.image = resize_bicubic(crop(image, box.y, box.x, box.height, box.width), side, side);
  out.image.clamp01();
  return out;
}

// Pixels resampled to grid x grid, per-channel mean removed, unit L2 norm.
std::vector<double> normalized_grid(const FaceCrop& crop, int grid) {
  Image small = resize_bicubic(crop.image, grid, grid);
  const int ch = small.channels();
  std::vector<double> v(small.values().begin(), small.values().end());
  for (int c = 0; c < ch; ++c) {
    double mean = 0.0;
    for (std::size_t i = c; i < v.size(); i += ch) mean += v[i];
    mean /= static_cast<double>(grid) * grid;
    for (std::size_t i = c; i < v.size(); i += ch) v[i] -= mean;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

std::vector<double> project(const std::vector<double>& projection, const std::vector<double>& x, int dim) {
  std::vector<double> out(dim, 0.0);
  const std::size_t n = x.size();
  for (int i = 0; i < dim; ++i) {
    double acc = 0.0;
    const double* row = projection.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> gaussian_matrix(int rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (double& v : m) v = standard_normal(rng);
  return m;
}

}  // namespace

FaceCrop detect_and_crop(const Image& image, const FaceDetector& detector, int side) {
  if (side < 1) throw std::invalid_argument("detect_and_crop: crop side must be positive");
  std::vector<Box> boxes;
  for (const Box& b : detector.detect(image)) {
    Box c = clip_box(b, image);
    if (c.width > 0 && c.height > 0) boxes.push_back(c);
  }
  if (boxes.empty()) throw NoFaceError("no face detected");
  const Box best = *std::min_element(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
  return crop_box(image, best, side);
}

FaceCrop detect_and_crop_or_center(const Image& image, const FaceDetector& detector, int side) {
  try {
    return detect_and_crop(image, detector, side);
  } catch (const NoFaceError&) {
    const int s = std::min(image.height(), image.width());
    FaceCrop out = crop_box(image, Box{(image.width() - s) / 2, (image.height() - s) / 2, s, s}, side);
    out.center_fallback = true;
    return out;
  }
}

ProjectionEmbedder::ProjectionEmbedder(int dim, int grid, std::uint64_t seed)
    : dim_(dim), grid_(grid), projection_(gaussian_matrix(dim, static_cast<std::size_t>(grid) * grid * 3, seed)) {}

std::vector<double> ProjectionEmbedder::embed(const FaceCrop& crop) const {
  if (crop.image.channels() != 3) throw std::invalid_argument("ProjectionEmbedder: expected RGB crop");
  return project(projection_, normalized_grid(crop, grid_), dim_);
}

ProjectionRecognizer::ProjectionRecognizer(int dim, int grid, std::uint64_t seed)
    : dim_(dim), grid_(grid), projection_(gaussian_matrix(dim, static_cast<std::size_t>(grid) * grid * 3, seed)) {}

std::vector<double> ProjectionRecognizer::features(const FaceCrop& crop) const {
  if (crop.image.channels() != 3) throw std::invalid_argument("ProjectionRecognizer: expected RGB crop");
  return project(projection_, normalized_grid(crop, grid_), dim_);
}

MlpFusionHead::MlpFusionHead(int dim, int face_dim, std::uint64_t seed) : dim_(dim), face_dim_(face_dim) {
  Rng rng(seed);
  a1_w_ = params_.add("align.0.w", random_tensor({face_dim, dim}, std::sqrt(1.0 / face_dim), rng));
  a1_b_ = params_.add("align.0.b", nn::Tensor({dim}));
  a2_w_ = params_.add("align.1.w", random_tensor({dim, dim}, std::sqrt(1.0 / dim), rng));
  a2_b_ = params_.add("align.1.b", nn::Tensor({dim}));
  f1_w_ = params_.add("fuse.0.w", random_tensor({2 * dim, dim}, std::sqrt(1.0 / (2 * dim)), rng));
  f1_b_ = params_.add("fuse.0.b", nn::Tensor({dim}));
  f2_w_ = params_.add("fuse.1.w", random_tensor({dim, dim}, std::sqrt(1.0 / dim), rng));
  f2_b_ = params_.add("fuse.1.b", nn::Tensor({dim}));
}

nn::Var MlpFusionHead::fuse(const std::vector<double>& clip_features, const std::vector<double>& face_features) const {
  if (static_cast<int>(clip_features.size()) != dim_) throw std::invalid_argument("MlpFusionHead: clip feature size mismatch");
  if (static_cast<int>(face_features.size()) != face_dim_) throw std::invalid_argument("MlpFusionHead: face feature size mismatch");
  nn::Var g = nn::constant(nn::Tensor({1, face_dim_}, face_features));
  nn::Var f = nn::constant(nn::Tensor({1, dim_}, clip_features));
  nn::Var g_hat = nn::linear(nn::gelu(nn::linear(g, a1_w_, a1_b_)), a2_w_, a2_b_);
  const nn::Var parts[] = {g_hat, f};
  nn::Var joined = nn::concat_cols(parts);
  return nn::linear(nn::gelu(nn::linear(joined, f1_w_, f1_b_)), f2_w_, f2_b_);
}

ReferenceFeatures extract_reference_features(const FaceCrop& crop, const ImageEmbedder& embedder,
                                             const FaceRecognizer& recognizer) {
  return ReferenceFeatures{embedder.embed(crop), recognizer.features(crop)};
}

IdentityEmbedding encode_identity(const ReferenceFeatures& features, const FusionHead& fusion) {
  IdentityEmbedding out{fusion.fuse(features.clip, features.face)};
  if (out.row.value().rank() != 2 || out.row.value().dim(0) != 1 || out.row.value().dim(1) != fusion.dim()) {
    throw std::runtime_error("fusion head returned shape " + nn::shape_string(out.row.shape()));
  }
  for (double v : out.row.value().values())
    if (!std::isfinite(v)) throw std::runtime_error("fusion head produced a non-finite value");
  return out;
}

IdentityEmbedding encode_identity(const FaceCrop& crop, const ImageEmbedder& embedder,
                                  const FaceRecognizer& recognizer, const FusionHead& fusion) {
  return encode_identity(extract_reference_features(crop, embedder, recognizer), fusion);
}

StackedIdentity combine(std::span<const IdentityEmbedding> embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("combine: no identity embeddings");
  const int d = embeddings.front().dim();
  std::vector<nn::Var> rows;
  for (const auto& e : embeddings) {
    if (e.row.value().rank() != 2 || e.row.value().dim(0) != 1 || e.dim() != d) {
      throw std::invalid_argument("combine: embeddings must all be [1, d]");
    }
    rows.push_back(e.row);
  }
  return StackedIdentity{nn::concat_rows(rows)};
}

PromptEmbedding replace_token(const PromptEmbedding& c_text, const StackedIdentity& s) {
  const int L = c_text.length();
  const int k = c_text.token_index;
  if (k < 0 || k + c_text.span_length > L) throw std::invalid_argument("replace_token: token index out of range");
  if (s.dim() != c_text.dim()) throw std::invalid_argument("replace_token: identity dim does not match prompt dim");
  std::vector<nn::Var> parts;
  if (k > 0) parts.push_back(nn::slice_rows(c_text.tokens, 0, k));
  parts.push_back(s.rows);
  if (k + c_text.span_length < L) parts.push_back(nn::slice_rows(c_text.tokens, k + c_text.span_length, L));
  PromptEmbedding out;
  out.tokens = nn::concat_rows(parts);
  out.token_index = k;
  out.span_length = s.count();
  return out;
}

nn::Tensor extract_span(const PromptEmbedding& c_id) {
  const int d = c_id.dim();
  const auto& v = c_id.tokens.value();
  std::vector<double> rows(v.values().begin() + static_cast<std::ptrdiff_t>(c_id.token_index) * d,
                           v.values().begin() + static_cast<std::ptrdiff_t>(c_id.token_index + c_id.span_length) * d);
  return nn::Tensor({c_id.span_length, d}, std::move(rows));
}

}  // namespace idr
