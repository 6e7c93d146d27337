#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "idrestore/image.hpp"
#include "idrestore/refpool.hpp"
#include "idrestore/rng.hpp"

namespace idr {

inline constexpr int kManifestSchemaVersion = 1;

struct ReferenceRecord {
  std::string path;
  std::string identity_id;
};

struct ManifestEntry {
  std::string image_id;
  std::string path;
  std::string identity_id;
  std::vector<ReferenceRecord> references;
  std::vector<std::string> flags;
};

struct MissingFile {
  std::string image_id;
  std::string path;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  std::vector<ManifestEntry> entries;
  // Relative paths resolve against this directory (the manifest's own).
  std::filesystem::path base_dir;
  std::vector<MissingFile> missing;

  std::filesystem::path resolve(const std::string& path) const;
};

// Schema violations, with the offending line where it can be located.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& message, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// A reference given as a bare string inherits the entry's identity_id.
// Missing files are listed in DatasetManifest::missing rather than thrown.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);

nlohmann::json to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// n distinct reference paths, uniformly without replacement.
std::vector<std::string> sample_references(const ManifestEntry& entry, int n, Rng& rng);

struct IngestLogLine {
  std::string image_id;
  std::string message;
};

struct RealWorldIngest {
  DatasetManifest manifest;
  std::vector<IngestLogLine> log;
  nlohmann::json synthesis;  // image_id -> synthesis report
};

struct RealWorldOptions {
  // Invoked as `<cmd> <input> <output>`; empty means copy the input through.
  std::string restorer_command;
  int references_per_image = 4;
  IdentityGateConfig gate;
};

// Restores every LQ image in `lq_dir`, synthesizes same-identity references
// for it through the gate and writes images plus manifest.json to `out_dir`.
RealWorldIngest build_real_world_ref_manifest(const std::filesystem::path& lq_dir, const std::filesystem::path& out_dir,
                                              const RealWorldOptions& options, const IdentityGenerator& generator,
                                              const PosePool& pool, const PoseImageLookup& pose_image,
                                              const SimilarityFn& similarity, Rng& rng);

// Procedural "faces": layered ellipses whose identity (colors, proportions),
// pose (yaw, pitch, roll, scale) and expression (mouth, brows, eyes) vary
// independently.
struct FaceIdentity {
  double skin[3];
  double hair[3];
  double iris[3];
  double background[3];
  double face_aspect;
  double eye_spacing;
  double eye_size;
  double nose_length;
  double mouth_width;
  double hair_volume;
};

struct FacePose {
  double yaw = 0.0;    // [-1, 1]
  double pitch = 0.0;  // [-1, 1]
  double roll = 0.0;   // radians
  double scale = 1.0;
};

struct FaceExpression {
  double mouth_open = 0.0;  // [0, 1]
  double smile = 0.0;       // [-1, 1]
  double brow_raise = 0.0;  // [-1, 1]
  double eye_open = 1.0;    // [0.2, 1]
};

FaceIdentity random_face_identity(Rng& rng);
FacePose random_face_pose(Rng& rng);
FaceExpression random_face_expression(Rng& rng);

Image render_face(const FaceIdentity& identity, const FacePose& pose, const FaceExpression& expression, int size);

struct CorpusImage {
  std::string image_id;
  std::string identity_id;
  Image image;
};

// `identities` identities with `per_identity` images each.
std::vector<CorpusImage> generate_corpus(int identities, int per_identity, int size, std::uint64_t seed);

// Writes the corpus as PNG plus a manifest in which every image lists the
// other images of its identity as references.
DatasetManifest write_corpus(std::span<const CorpusImage> corpus, const std::filesystem::path& out_dir);

}  // namespace idr
