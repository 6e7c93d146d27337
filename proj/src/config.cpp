#include "idrestore/config.hpp"

#include <fstream>
#include <set>
#include <thread>

namespace idr {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  void interval(const char* key, Interval& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(path_ + "." + key + " must be [lo, hi]");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string child(const char* key) const { return path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_degradation(const json& j, const std::string& path, DegradationRanges& d) {
  Section s(j, path);
  s.interval("sigma", d.sigma);
  s.interval("scale", d.scale);
  s.interval("noise", d.noise);
  s.interval("quality", d.quality);
}

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

}  // namespace

void AppConfig::validate() const {
  try {
    degradation.validate();
    if (pool.c1 < 1 || pool.c2 < 1) throw std::invalid_argument("pool.c1 and pool.c2 must be >= 1");
    if (pool.references_per_image < 1) throw std::invalid_argument("pool.references_per_image must be >= 1");
    pool.gate.validate();
    model.validate();
    training.validate();
    sampler.validate(NoiseSchedule::cosine(model.timesteps));
    if (metrics.ssim.window < 1 || metrics.ssim.window % 2 == 0) throw std::invalid_argument("metrics.ssim_window must be odd");
    if (!(metrics.ssim.sigma > 0.0)) throw std::invalid_argument("metrics.ssim_sigma must be positive");
    if (metrics.landmarks < 1) throw std::invalid_argument("metrics.landmarks must be >= 1");
    if (jobs < 0) throw std::invalid_argument("jobs must be >= 0");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

int AppConfig::resolved_jobs() const {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

AppConfig parse_config(const json& j) {
  AppConfig c;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("jobs", c.jobs);
    if (root.has("degradation")) read_degradation(root.at("degradation"), "degradation", c.degradation);
    if (root.has("pool")) {
      Section s(root.at("pool"), "pool");
      s.get("c1", c.pool.c1);
      s.get("c2", c.pool.c2);
      s.get("delta", c.pool.gate.delta);
      s.get("max_attempts", c.pool.gate.max_attempts);
      s.get("references_per_image", c.pool.references_per_image);
    }
    if (root.has("model")) {
      Section s(root.at("model"), "model");
      auto& m = c.model;
      s.get("image_size", m.image_size);
      s.get("latent_factor", m.latent_factor);
      s.get("timesteps", m.timesteps);
      s.get("token_dim", m.token_dim);
      s.get("crop_side", m.crop_side);
      s.get("embedder_grid", m.embedder_grid);
      s.get("recognizer_grid", m.recognizer_grid);
      s.get("detector", m.detector);
      s.get("embedder", m.embedder);
      s.get("recognizer", m.recognizer);
      if (s.has("denoiser")) {
        Section d(s.at("denoiser"), "model.denoiser");
        d.get("channels", m.denoiser.channels);
        d.get("blocks", m.denoiser.blocks);
        d.get("attention_block", m.denoiser.attention_block);
        d.get("key_dim", m.denoiser.key_dim);
        d.get("time_features", m.denoiser.time_features);
      }
    }
    if (root.has("training")) {
      Section s(root.at("training"), "training");
      auto& t = c.training;
      if (s.has("stage")) {
        std::string stage;
        s.get("stage", stage);
        try {
          t.stage = parse_stage(stage);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("training.stage: ") + e.what());
        }
      }
      s.get("dropout_prob", t.dropout_prob);
      s.get("backbone_dropout_prob", t.backbone_dropout_prob);
      s.get("learning_rate", t.optimizer.learning_rate);
      s.get("weight_decay", t.optimizer.weight_decay);
      s.get("iterations", t.iterations);
      s.get("batch_size", t.batch_size);
      s.get("max_references", t.max_references);
      s.get("resample_degradation", t.resample_degradation);
      s.get("smoothing_window", t.smoothing_window);
      s.get("resume_control", t.resume_control);
    }
    if (root.has("sampler")) {
      Section s(root.at("sampler"), "sampler");
      auto& p = c.sampler;
      s.get("steps", p.steps);
      if (s.has("t_start") && !s.at("t_start").is_null()) {
        int t = 0;
        s.get("t_start", t);
        p.t_start = t;
      }
      s.get("lambda_cfg", p.lambda_cfg);
      s.get("noise_space_cfg", p.noise_space_cfg);
      s.get("color_correction", p.color_correction);
      s.get("wavelet_levels", p.wavelet_levels);
    }
    if (root.has("metrics")) {
      Section s(root.at("metrics"), "metrics");
      s.get("ssim_window", c.metrics.ssim.window);
      s.get("ssim_sigma", c.metrics.ssim.sigma);
      s.get("landmarks", c.metrics.landmarks);
      if (s.has("external")) {
        const json& ext = s.at("external");
        if (!ext.is_array()) throw ConfigError("metrics.external must be an array");
        for (const json& e : ext) {
          Section m(e, "metrics.external[]");
          ExternalMetric em;
          m.get("name", em.name);
          m.get("command", em.command);
          if (em.name.empty() || em.command.empty()) throw ConfigError("metrics.external entries need name and command");
          c.metrics.external.push_back(em);
        }
      }
    }
  }
  c.training.seed = c.seed;
  c.training.degradation = c.degradation;
  c.model.seed = c.seed;
  c.sampler.seed = c.seed;
  c.validate();
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const AppConfig& c) {
  const auto& m = c.model;
  const auto& t = c.training;
  const auto& p = c.sampler;
  json ext = json::array();
  for (const auto& e : c.metrics.external) ext.push_back({{"name", e.name}, {"command", e.command}});
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"degradation",
       {{"sigma", interval_json(c.degradation.sigma)},
        {"scale", interval_json(c.degradation.scale)},
        {"noise", interval_json(c.degradation.noise)},
        {"quality", interval_json(c.degradation.quality)}}},
      {"pool",
       {{"c1", c.pool.c1},
        {"c2", c.pool.c2},
        {"delta", c.pool.gate.delta},
        {"max_attempts", c.pool.gate.max_attempts},
        {"references_per_image", c.pool.references_per_image}}},
      {"model",
       {{"image_size", m.image_size},
        {"latent_factor", m.latent_factor},
        {"timesteps", m.timesteps},
        {"token_dim", m.token_dim},
        {"crop_side", m.crop_side},
        {"embedder_grid", m.embedder_grid},
        {"recognizer_grid", m.recognizer_grid},
        {"detector", m.detector},
        {"embedder", m.embedder},
        {"recognizer", m.recognizer},
        {"denoiser",
         {{"channels", m.denoiser.channels},
          {"blocks", m.denoiser.blocks},
          {"attention_block", m.denoiser.attention_block},
          {"key_dim", m.denoiser.key_dim},
          {"time_features", m.denoiser.time_features}}}}},
      {"training",
       {{"stage", to_string(t.stage)},
        {"dropout_prob", t.dropout_prob},
        {"backbone_dropout_prob", t.backbone_dropout_prob},
        {"learning_rate", t.optimizer.learning_rate},
        {"weight_decay", t.optimizer.weight_decay},
        {"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"max_references", t.max_references},
        {"resample_degradation", t.resample_degradation},
        {"smoothing_window", t.smoothing_window},
        {"resume_control", t.resume_control}}},
      {"sampler",
       {{"steps", p.steps},
        {"t_start", p.t_start ? json(*p.t_start) : json(nullptr)},
        {"lambda_cfg", p.lambda_cfg},
        {"noise_space_cfg", p.noise_space_cfg},
        {"color_correction", p.color_correction},
        {"wavelet_levels", p.wavelet_levels}}},
      {"metrics",
       {{"ssim_window", c.metrics.ssim.window},
        {"ssim_sigma", c.metrics.ssim.sigma},
        {"landmarks", c.metrics.landmarks},
        {"external", ext}}},
  };
}

}  // namespace idr
