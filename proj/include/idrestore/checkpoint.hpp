#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "idrestore/parameters.hpp"

namespace idr {

class MissingGroupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint is two files: `<stem>.bin` holding every parameter as
// little-endian float64, back to back, and `<stem>.json` describing groups,
// parameter names, shapes and offsets (in values, not bytes).
struct CheckpointManifest {
  std::vector<std::string> groups;   // everything stored in the archive
  std::vector<std::string> handoff;  // groups the next stage is expected to load
  std::vector<std::string> backbone;  // frozen base weights the next stage builds on
  std::string stage;
};

// `path` may be given with or without extension.
CheckpointManifest save_checkpoint(const std::filesystem::path& path, std::span<ParameterGroup* const> groups,
                                   const std::vector<std::string>& handoff, const std::string& stage,
                                   const std::vector<std::string>& backbone = {});

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path);

// Overwrites the values of each target group from the archive. Throws
// MissingGroupError if a group is absent and std::runtime_error on shape
// mismatch.
void load_checkpoint(const std::filesystem::path& path, std::span<ParameterGroup* const> targets);

}  // namespace idr
