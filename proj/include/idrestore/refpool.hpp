#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "idrestore/image.hpp"
#include "idrestore/rng.hpp"

namespace idr {

inline constexpr int kPoseDims = 6;
inline constexpr int kExpressionDims = 50;

struct AttributeVector {
  std::vector<double> theta;  // pose, kPoseDims
  std::vector<double> psi;    // expression, kExpressionDims

  // Throws std::invalid_argument on wrong lengths or non-finite entries.
  void validate() const;
};

class AttributeExtractor {
 public:
  virtual ~AttributeExtractor() = default;
  virtual AttributeVector extract(const Image& image) const = 0;
};

class IdentityGenerator {
 public:
  virtual ~IdentityGenerator() = default;
  virtual Image generate(const Image& identity, const Image& pose, std::uint64_t seed) const = 0;
};

using SimilarityFn = std::function<double(const Image&, const Image&)>;

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> wcss_history;  // one entry per assignment pass
  int iterations = 0;
  bool converged = false;
};

// Lloyd iterations from k-means++ seeding. Empty clusters are re-seeded at
// the point farthest from its centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, Rng& rng, int max_iters = 100);

double within_cluster_ss(const std::vector<std::vector<double>>& vectors, const std::vector<int>& assignments,
                         const std::vector<std::vector<double>>& centroids);

struct NamedImage {
  std::string id;
  Image image;
};

struct SkippedItem {
  std::string id;
  std::string reason;
};

// c1 x c2 subsets; subset j = i * c2 + l holds level-1 part i, level-2 part l.
struct PosePool {
  int c1 = 0;
  int c2 = 0;
  std::vector<std::vector<std::string>> subsets;
  std::vector<std::vector<double>> level1_centroids;               // c1 x kPoseDims
  std::vector<std::vector<std::vector<double>>> level2_centroids;  // c1 x (<= c2) x kExpressionDims
  std::vector<SkippedItem> skipped;

  std::size_t image_count() const;
  int nonempty_count() const;
};

struct PoolEntry {
  std::string id;
  AttributeVector attributes;
};

PosePool build_pose_pool(std::span<const PoolEntry> entries, int c1, int c2, Rng& rng);
// Runs the extractor over `images` on up to `jobs` threads; failures are
// recorded in PosePool::skipped.
PosePool build_pose_pool(std::span<const NamedImage> images, const AttributeExtractor& extractor, int c1, int c2,
                         Rng& rng, int jobs = 1);

nlohmann::json to_json(const PosePool& pool);
PosePool pose_pool_from_json(const nlohmann::json& j);

class EmptySubsetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sample_pose_reference(const PosePool& pool, int subset, Rng& rng);

// Falls back to the nonempty subset whose level-1 centroid is nearest; `note`
// receives a message when that happens.
std::string sample_pose_reference_or_nearest(const PosePool& pool, int subset, Rng& rng, std::string* note = nullptr);

struct IdentityGateConfig {
  double delta = 0.5;
  int max_attempts = 3;
  void validate() const;
};

struct SlotReport {
  int slot = 0;
  int subset = -1;
  std::vector<std::string> pose_ids;
  std::vector<double> similarities;
  std::vector<std::string> errors;
  bool accepted = false;

  int attempts() const { return static_cast<int>(pose_ids.size()); }
};

struct SynthesisReport {
  std::vector<SlotReport> slots;
  int accepted() const;
  int abandoned() const;
};

nlohmann::json to_json(const SynthesisReport& report);

struct SynthesisResult {
  std::vector<Image> references;
  std::vector<double> similarities;  // of each kept reference
  SynthesisReport report;
};

using PoseImageLookup = std::function<Image(const std::string& id)>;

// Slots run in order; each slot draws its subset uniformly over the nonempty
// ones and resamples a pose from it on every attempt. A generator exception
// abandons the slot.
SynthesisResult synthesize_reference_set(const Image& identity, const PosePool& pool, const PoseImageLookup& pose_image,
                                         const IdentityGenerator& generator, const SimilarityFn& similarity,
                                         const IdentityGateConfig& gate, int n_refs, Rng& rng);

// Image-moment stand-in for a 3DMM regressor. theta: foreground centroid,
// orientation, elongation, spread and horizontal skew; psi: mean-removed
// 10 x 5 luma grid of the lower face half.
class MomentAttributeExtractor final : public AttributeExtractor {
 public:
  AttributeVector extract(const Image& image) const override;
};

// Moves the identity image's foreground onto the pose image's layout with a
// similarity transform (translation, rotation, scale estimated from image
// moments), plus faint seeded noise.
class GeometricIdentityGenerator final : public IdentityGenerator {
 public:
  explicit GeometricIdentityGenerator(double noise = 0.01) : noise_(noise) {}
  Image generate(const Image& identity, const Image& pose, std::uint64_t seed) const override;

 private:
  double noise_;
};

}  // namespace idr
