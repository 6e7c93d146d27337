#include "idrestore/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace idr {

std::string to_string(TrainingStage stage) {
  switch (stage) {
    case TrainingStage::one_stage: return "one_stage";
    case TrainingStage::stage1: return "stage1";
    case TrainingStage::stage2: return "stage2";
  }
  return "unknown";
}

TrainingStage parse_stage(const std::string& text) {
  if (text == "one" || text == "one_stage") return TrainingStage::one_stage;
  if (text == "1" || text == "stage1") return TrainingStage::stage1;
  if (text == "2" || text == "stage2") return TrainingStage::stage2;
  throw std::invalid_argument("unknown training stage '" + text + "'");
}

void TrainingConfig::validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw std::invalid_argument("training: dropout_prob must be in [0, 1]");
  if (!(backbone_dropout_prob >= 0.0 && backbone_dropout_prob <= 1.0)) {
    throw std::invalid_argument("training: backbone_dropout_prob must be in [0, 1]");
  }
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
  if (iterations < 0) throw std::invalid_argument("training: iterations must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
  if (max_references < 1) throw std::invalid_argument("training: max_references must be >= 1");
  if (smoothing_window < 1) throw std::invalid_argument("training: smoothing_window must be >= 1");
  degradation.validate();
}

std::vector<std::string> trainable_groups(TrainingStage stage) {
  if (stage == TrainingStage::stage2) return {kControlGroup};
  return {kIdEncoderGroup, kControlGroup, kDenoiserGroup};
}

void apply_trainable_set(RestorationModel& model, TrainingStage stage) {
  const auto names = trainable_groups(stage);
  for (ParameterGroup* g : model.groups()) {
    g->set_trainable(std::find(names.begin(), names.end(), g->name()) != names.end());
  }
}

bool draw_prompt_dropout(double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("prompt_dropout: p must be in [0, 1]");
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

PromptEmbedding prompt_dropout(const PromptEmbedding& c_id, const PromptEmbedding& c_text, double p, Rng& rng) {
  return draw_prompt_dropout(p, rng) ? c_text : c_id;
}

TrainingItem prepare_training_item(std::string id, Image hq, Image lq, std::span<const Image> references,
                                   const RestorationModel& model) {
  if (!hq.same_shape(lq)) throw std::invalid_argument("training item '" + id + "': LQ and HQ shapes differ");
  TrainingItem item;
  item.id = std::move(id);
  item.hq_latent = model.codec().encode(hq);
  item.lq_latent = model.codec().encode(lq);
  item.hq = std::move(hq);
  item.lq = std::move(lq);
  for (const Image& ref : references) {
    try {
      item.references.push_back(model.reference_features(ref));
    } catch (const NoFaceError&) {
    }
  }
  return item;
}

Batch assemble_batch(std::span<const TrainingItem> items, const TrainingConfig& config,
                     const RestorationModel& model, Rng& rng) {
  if (items.empty()) throw std::invalid_argument("assemble_batch: no training items");
  Batch batch;
  for (int b = 0; b < config.batch_size; ++b) {
    const int index = uniform_int(rng, 0, static_cast<int>(items.size()) - 1);
    const TrainingItem& item = items[index];
    BatchSample sample;
    sample.item = &item;
    if (config.resample_degradation) {
      TrainingPair pair = make_training_pair(item.hq, config.degradation, rng);
      sample.lq_latent = model.codec().encode(pair.lq);
    } else {
      sample.lq_latent = item.lq_latent;
    }
    const int available = static_cast<int>(item.references.size());
    if (available > 0) {
      const int n = uniform_int(rng, 1, std::min(config.max_references, available));
      sample.reference_indices = sample_without_replacement(available, n, rng);
    }
    batch.samples.push_back(std::move(sample));
  }
  return batch;
}

double training_step(const Batch& batch, RestorationModel& model, AdamW& optimizer,
                     const TrainingConfig& config, Rng& rng) {
  if (batch.samples.empty()) throw std::invalid_argument("training_step: empty batch");
  const NoiseSchedule& schedule = model.schedule();
  const int T = schedule.total_steps();

  std::vector<nn::Var> losses;
  std::ostringstream diag;
  for (const BatchSample& s : batch.samples) {
    const int t = uniform_int(rng, 1, T);
    nn::Tensor eps(s.item->hq_latent.shape());
    for (double& v : eps.values()) v = standard_normal(rng);
    nn::Var z_t = nn::constant(add_noise(s.item->hq_latent, eps, t, schedule));

    const double p = config.stage == TrainingStage::stage2 ? config.dropout_prob : config.backbone_dropout_prob;
    const bool drop = p > 0.0 && draw_prompt_dropout(p, rng);
    PromptEmbedding condition = model.text_prompt();
    if (!drop && !s.reference_indices.empty()) {
      std::vector<ReferenceFeatures> refs;
      for (int i : s.reference_indices) refs.push_back(s.item->references[i]);
      condition = model.identity_prompt(refs);
    }
    ControlSignal control = model.control().encode(s.lq_latent);
    nn::Var eps_hat = predict_noise(model.denoiser(), z_t, t, condition, &control, schedule);
    losses.push_back(nn::l2_distance(eps_hat, nn::constant(std::move(eps))));
    diag << ' ' << s.item->id << "@t=" << t;
  }
  nn::Var loss = nn::scale(nn::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    throw TrainingError("non-finite loss at optimizer step " + std::to_string(optimizer.steps_taken() + 1) +
                        "; samples:" + diag.str());
  }

  std::vector<ParameterGroup*> active;
  for (ParameterGroup* g : model.groups()) {
    if (g->trainable()) {
      g->zero_grad();
      active.push_back(g);
    }
  }
  nn::backward(loss);
  optimizer.step(active);
  for (ParameterGroup* g : active) g->zero_grad();
  return value;
}

CheckpointManifest checkpoint_stage1(RestorationModel& model, const std::filesystem::path& path) {
  auto groups = model.groups();
  return save_checkpoint(path, groups, {kIdEncoderGroup}, to_string(TrainingStage::stage1), {kDenoiserGroup});
}

void load_stage1_handoff(RestorationModel& model, const std::filesystem::path& path, bool resume_control) {
  const CheckpointManifest manifest = read_checkpoint_manifest(path);
  std::vector<ParameterGroup*> targets;
  for (const auto& name : manifest.handoff) targets.push_back(&model.group(name));
  if (std::find(manifest.handoff.begin(), manifest.handoff.end(), kIdEncoderGroup) == manifest.handoff.end()) {
    throw MissingGroupError("checkpoint handoff does not include '" + std::string(kIdEncoderGroup) + "'");
  }
  for (const auto& name : manifest.backbone) targets.push_back(&model.group(name));
  if (resume_control) targets.push_back(&model.group(kControlGroup));
  load_checkpoint(path, targets);
}

nlohmann::json to_json(const TrainingReport& report) {
  nlohmann::json j;
  j["stage"] = to_string(report.stage);
  j["iterations"] = report.iterations;
  j["losses"] = report.losses;
  j["initial_smoothed_loss"] = report.initial_smoothed;
  j["final_smoothed_loss"] = report.final_smoothed;
  j["trainable_groups"] = trainable_groups(report.stage);
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& a : report.audit) {
    audit.push_back({{"group", a.group}, {"trainable", a.trainable}, {"l2_change", a.l2_change}, {"changed", a.l2_change > 0.0}});
  }
  j["audit"] = audit;
  if (report.checkpoint) {
    j["checkpoint"] = {{"path", report.checkpoint_path},
                       {"groups", report.checkpoint->groups},
                       {"handoff", report.checkpoint->handoff}};
  } else {
    j["checkpoint"] = nullptr;
  }
  return j;
}

namespace {

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

}  // namespace

TrainingReport run_training(const TrainingConfig& config, std::span<const TrainingItem> items,
                            RestorationModel& model, const std::filesystem::path& checkpoint_path) {
  config.validate();
  apply_trainable_set(model, config.stage);

  TrainingReport report;
  report.stage = config.stage;
  report.iterations = config.iterations;

  std::vector<std::vector<double>> before;
  for (ParameterGroup* g : model.groups()) before.push_back(g->snapshot());

  if (config.iterations > 0 && items.empty()) throw std::invalid_argument("run_training: no usable training items");

  AdamW optimizer(config.optimizer);
  Rng rng(config.seed);
  for (int it = 0; it < config.iterations; ++it) {
    Batch batch = assemble_batch(items, config, model, rng);
    report.losses.push_back(training_step(batch, model, optimizer, config, rng));
  }

  const std::size_t n = report.losses.size();
  const std::size_t w = std::min<std::size_t>(config.smoothing_window, n);
  report.initial_smoothed = window_mean(report.losses, 0, w);
  report.final_smoothed = window_mean(report.losses, n - w, n);

  auto groups = model.groups();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto after = groups[i]->snapshot();
    double ss = 0.0;
    for (std::size_t k = 0; k < after.size(); ++k) ss += (after[k] - before[i][k]) * (after[k] - before[i][k]);
    report.audit.push_back({groups[i]->name(), groups[i]->trainable(), std::sqrt(ss)});
  }

  if (!checkpoint_path.empty() && n > 0) {
    if (config.stage == TrainingStage::stage1) {
      report.checkpoint = checkpoint_stage1(model, checkpoint_path);
    } else {
      std::vector<std::string> all;
      for (ParameterGroup* g : groups) all.push_back(g->name());
      report.checkpoint = save_checkpoint(checkpoint_path, groups, all, to_string(config.stage));
    }
    report.checkpoint_path = checkpoint_path.string();
  }
  return report;
}

}  // namespace idr
