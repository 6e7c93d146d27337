#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "idrestore/checkpoint.hpp"
#include "idrestore/degradation.hpp"
#include "idrestore/model.hpp"
#include "idrestore/optimizer.hpp"

namespace idr {

enum class TrainingStage { one_stage, stage1, stage2 };

std::string to_string(TrainingStage stage);
// Accepts "one", "one_stage", "1", "stage1", "2", "stage2".
TrainingStage parse_stage(const std::string& text);

struct TrainingConfig {
  TrainingStage stage = TrainingStage::stage1;
  double dropout_prob = 0.5;  // only used in stage2
  // Text-only conditioning rate in stage1 / one_stage. The toy denoiser has
  // no pretrained unconditional path, so it has to learn one here.
  double backbone_dropout_prob = 0.0;
  AdamWConfig optimizer;
  int iterations = 0;
  int batch_size = 4;
  int max_references = 4;
  std::uint64_t seed = 0;
  // When false each item keeps the LQ image it was prepared with.
  bool resample_degradation = true;
  DegradationRanges degradation;
  int smoothing_window = 50;
  bool resume_control = false;

  void validate() const;
};

// stage1 / one_stage: id_encoder, control and the toy denoiser (which stands
// in for a pretrained backbone and has to be learned somewhere); stage2:
// control only.
std::vector<std::string> trainable_groups(TrainingStage stage);
void apply_trainable_set(RestorationModel& model, TrainingStage stage);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// True with probability p: the identity prompt is replaced by the text prompt.
bool draw_prompt_dropout(double p, Rng& rng);
PromptEmbedding prompt_dropout(const PromptEmbedding& c_id, const PromptEmbedding& c_text, double p, Rng& rng);

// One HQ image with its same-identity references, preprocessed for the model.
struct TrainingItem {
  std::string id;
  Image hq;
  Image lq;
  nn::Tensor hq_latent;
  nn::Tensor lq_latent;
  std::vector<ReferenceFeatures> references;
};

// References that fail detection are dropped silently; callers that care
// should check `references.size()`.
TrainingItem prepare_training_item(std::string id, Image hq, Image lq, std::span<const Image> references,
                                   const RestorationModel& model);

struct BatchSample {
  const TrainingItem* item = nullptr;
  nn::Tensor lq_latent;
  std::vector<int> reference_indices;  // 1..max_references drawn without replacement
};

struct Batch {
  std::vector<BatchSample> samples;
};

Batch assemble_batch(std::span<const TrainingItem> items, const TrainingConfig& config,
                     const RestorationModel& model, Rng& rng);

// Mean over the batch of ||eps - eps_theta(z_t, I_LQ, I_ref)||_2 with t uniform
// in [1, T]. Gradients reach only the groups enabled by apply_trainable_set.
// Throws TrainingError if the loss is not finite.
double training_step(const Batch& batch, RestorationModel& model, AdamW& optimizer,
                     const TrainingConfig& config, Rng& rng);

// Writes every group; the handoff list names only id_encoder, and the toy
// denoiser is recorded as the backbone the next stage builds on.
CheckpointManifest checkpoint_stage1(RestorationModel& model, const std::filesystem::path& path);

// Loads handoff + backbone groups (and control when resume_control is set).
void load_stage1_handoff(RestorationModel& model, const std::filesystem::path& path, bool resume_control);

struct GroupAudit {
  std::string group;
  bool trainable = false;
  double l2_change = 0.0;
};

struct TrainingReport {
  TrainingStage stage = TrainingStage::stage1;
  int iterations = 0;
  std::vector<double> losses;
  double initial_smoothed = 0.0;
  double final_smoothed = 0.0;
  std::vector<GroupAudit> audit;
  std::optional<CheckpointManifest> checkpoint;
  std::string checkpoint_path;
};

nlohmann::json to_json(const TrainingReport& report);

// Runs config.iterations steps. Writes a checkpoint to `checkpoint_path`
// (unless empty or no step ran).
TrainingReport run_training(const TrainingConfig& config, std::span<const TrainingItem> items,
                            RestorationModel& model, const std::filesystem::path& checkpoint_path = {});

}  // namespace idr
