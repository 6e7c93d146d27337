#include "idrestore/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "idrestore/checkpoint.hpp"
#include "idrestore/config.hpp"
#include "idrestore/data.hpp"
#include "idrestore/image_io.hpp"
#include "idrestore/inference.hpp"
#include "idrestore/metrics.hpp"
#include "idrestore/parallel.hpp"
#include "idrestore/refpool.hpp"
#include "idrestore/training.hpp"

#ifndef IDRESTORE_VERSION
#define IDRESTORE_VERSION "0.0.0"
#endif

namespace idr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

std::optional<Interval> parse_pair(const std::string& text, const char* flag) {
  if (text.empty()) return std::nullopt;
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) {
      const double v = std::stod(text);
      return Interval{v, v};
    }
    return Interval{std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError(flag, "expected a or a,b");
  }
}

AppConfig resolve_config(const Common& common) {
  AppConfig cfg = common.config_path.empty() ? parse_config(json::object()) : load_config(common.config_path);
  if (common.seed) {
    cfg.seed = *common.seed;
    cfg.training.seed = cfg.model.seed = cfg.sampler.seed = cfg.seed;
  }
  if (common.jobs) cfg.jobs = *common.jobs;
  return cfg;
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_stamp(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                 const AppConfig& cfg) {
  write_json({{"tool", "idrestore"},
              {"version", IDRESTORE_VERSION},
              {"command", command},
              {"argv", args},
              {"seed", cfg.seed},
              {"config", to_json(cfg)}},
             dir / "stamp.json");
}

// Images keyed by file stem.
std::map<std::string, fs::path> index_images(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) out[p.stem().string()] = p;
  return out;
}

Image fit_to(const Image& img, int side) {
  if (img.height() == side && img.width() == side) return img;
  return resize_bicubic(img, side, side);
}

double recognizer_similarity(const RestorationModel& model, const Image& a, const Image& b) {
  const int side = model.config().crop_side;
  const auto fa = model.recognizer().features(detect_and_crop_or_center(a, model.detector(), side));
  const auto fb = model.recognizer().features(detect_and_crop_or_center(b, model.detector(), side));
  return ids(fa, fb);
}

void load_model_checkpoint(RestorationModel& model, const fs::path& path) {
  const CheckpointManifest m = read_checkpoint_manifest(path);
  std::vector<ParameterGroup*> targets;
  for (const auto& g : m.groups) targets.push_back(&model.group(g));
  load_checkpoint(path, targets);
}

int cmd_degrade(const Common& common, const std::vector<std::string>& args, const std::string& in_dir,
                const std::string& out_dir, const std::string& sigma, const std::string& scale,
                const std::string& noise, const std::string& quality, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  if (auto v = parse_pair(sigma, "--sigma")) cfg.degradation.sigma = *v;
  if (auto v = parse_pair(scale, "--scale")) cfg.degradation.scale = *v;
  if (auto v = parse_pair(noise, "--noise")) cfg.degradation.noise = *v;
  if (auto v = parse_pair(quality, "--quality")) cfg.degradation.quality = *v;
  cfg.training.degradation = cfg.degradation;
  cfg.validate();

  const auto inputs = list_images(in_dir);
  fs::create_directories(out_dir);
  std::vector<json> records(inputs.size());
  parallel_for(inputs.size(), cfg.resolved_jobs(), [&](std::size_t i) {
    json rec{{"input", inputs[i].string()}};
    try {
      Rng rng(derive_seed(cfg.seed, i));
      const Image hq = read_image(inputs[i]);
      const TrainingPair pair = make_training_pair(hq, cfg.degradation, rng);
      const fs::path dst = fs::path(out_dir) / (inputs[i].stem().string() + ".png");
      write_png(pair.lq, dst);
      rec["output"] = dst.string();
      rec["params"] = {{"sigma", pair.params.sigma},
                       {"scale", pair.params.scale},
                       {"noise", pair.params.noise},
                       {"quality", pair.params.quality}};
    } catch (const std::exception& e) {
      rec["error"] = e.what();
    }
    records[i] = std::move(rec);
  });
  int failures = 0;
  for (const auto& r : records) failures += r.contains("error");
  write_json({{"images", records}, {"failures", failures}}, fs::path(out_dir) / "degradation.json");
  write_stamp(out_dir, "degrade", args, cfg);
  out << "degraded " << inputs.size() - failures << " of " << inputs.size() << " images into " << out_dir << '\n';
  return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_build_pool(const Common& common, const std::vector<std::string>& args, const std::string& images_dir,
                   const std::string& out_path, std::optional<int> c1, std::optional<int> c2, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  if (c1) cfg.pool.c1 = *c1;
  if (c2) cfg.pool.c2 = *c2;
  cfg.validate();

  const auto paths = list_images(images_dir);
  std::vector<NamedImage> images;
  std::vector<SkippedItem> unreadable;
  for (const auto& p : paths) {
    try {
      images.push_back({p.stem().string(), read_image(p)});
    } catch (const std::exception& e) {
      unreadable.push_back({p.stem().string(), e.what()});
    }
  }
  Rng rng(cfg.seed);
  MomentAttributeExtractor extractor;
  PosePool pool = build_pose_pool(images, extractor, cfg.pool.c1, cfg.pool.c2, rng, cfg.resolved_jobs());
  pool.skipped.insert(pool.skipped.end(), unreadable.begin(), unreadable.end());
  write_json(to_json(pool), out_path);
  write_stamp(fs::path(out_path).parent_path().empty() ? fs::path(".") : fs::path(out_path).parent_path(), "build-pool",
              args, cfg);
  out << "pool: " << pool.image_count() << " images in " << pool.nonempty_count() << " nonempty subsets, "
      << pool.skipped.size() << " skipped\n";
  return kExitOk;
}

int cmd_synth_refs(const Common& common, const std::vector<std::string>& args, const std::string& in_dir,
                   const std::string& pool_path, const std::string& pool_images, const std::string& out_dir,
                   const std::string& restorer, std::optional<int> n, std::optional<double> delta, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  if (n) cfg.pool.references_per_image = *n;
  if (delta) cfg.pool.gate.delta = *delta;
  cfg.validate();

  std::ifstream pin(pool_path);
  if (!pin) throw std::runtime_error("cannot open pool " + pool_path);
  const PosePool pool = pose_pool_from_json(json::parse(pin));
  const auto pose_files = index_images(pool_images);
  auto lookup = [&](const std::string& id) {
    auto it = pose_files.find(id);
    if (it == pose_files.end()) throw std::runtime_error("pose image '" + id + "' not found in " + pool_images);
    return read_image(it->second);
  };
  const RestorationModel model(cfg.model);
  auto similarity = [&](const Image& a, const Image& b) { return recognizer_similarity(model, a, b); };

  RealWorldOptions options;
  options.restorer_command = restorer;
  options.references_per_image = cfg.pool.references_per_image;
  options.gate = cfg.pool.gate;
  GeometricIdentityGenerator generator;
  Rng rng(cfg.seed);
  RealWorldIngest ingest = build_real_world_ref_manifest(in_dir, out_dir, options, generator, pool, lookup, similarity, rng);
  json log = json::array();
  for (const auto& l : ingest.log) log.push_back({{"image_id", l.image_id}, {"message", l.message}});
  write_json({{"synthesis", ingest.synthesis}, {"log", log}}, fs::path(out_dir) / "synthesis_report.json");
  write_stamp(out_dir, "synth-refs", args, cfg);
  out << "reference sets: " << ingest.manifest.entries.size() << " entries, " << ingest.log.size() << " log lines\n";
  return kExitOk;
}

int cmd_synth_dataset(const Common& common, const std::vector<std::string>& args, const std::string& out_dir,
                      int identities, int per_identity, std::optional<int> size, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  cfg.validate();
  const int side = size.value_or(cfg.model.image_size);
  const auto corpus = generate_corpus(identities, per_identity, side, cfg.seed);
  const DatasetManifest m = write_corpus(corpus, out_dir);
  write_stamp(out_dir, "synth-dataset", args, cfg);
  out << "wrote " << m.entries.size() << " images for " << identities << " identities to " << out_dir << '\n';
  return kExitOk;
}

std::vector<TrainingItem> load_training_items(const DatasetManifest& manifest, const RestorationModel& model,
                                              const AppConfig& cfg, json& log) {
  std::vector<TrainingItem> items;
  const int side = cfg.model.image_size;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    try {
      const Image hq = fit_to(read_image(manifest.resolve(e.path)), side);
      Rng rng(derive_seed(cfg.seed ^ 0x5eedULL, i));
      TrainingPair pair = make_training_pair(hq, cfg.degradation, rng);
      std::vector<Image> refs;
      for (const auto& r : e.references) {
        try {
          refs.push_back(read_image(manifest.resolve(r.path)));
        } catch (const std::exception& ex) {
          log.push_back({{"image_id", e.image_id}, {"message", std::string("reference skipped: ") + ex.what()}});
        }
      }
      items.push_back(prepare_training_item(e.image_id, pair.hq, pair.lq, refs, model));
    } catch (const std::exception& ex) {
      log.push_back({{"image_id", e.image_id}, {"message", std::string("entry skipped: ") + ex.what()}});
    }
  }
  return items;
}

int cmd_train(const Common& common, const std::vector<std::string>& args, const std::string& stage,
              const std::string& manifest_path, const std::string& out_dir, const std::string& resume,
              std::optional<int> iterations, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  if (!stage.empty()) cfg.training.stage = parse_stage(stage);
  if (iterations) cfg.training.iterations = *iterations;
  cfg.validate();

  RestorationModel model(cfg.model);
  if (cfg.training.stage == TrainingStage::stage2) {
    if (resume.empty()) throw std::runtime_error("stage 2 needs --resume pointing at a stage-1 checkpoint");
    load_stage1_handoff(model, resume, cfg.training.resume_control);
  } else if (!resume.empty()) {
    load_model_checkpoint(model, resume);
  }

  const DatasetManifest manifest = load_manifest(manifest_path);
  json log = json::array();
  for (const auto& m : manifest.missing) log.push_back({{"image_id", m.image_id}, {"message", "missing file " + m.path}});
  const auto items = load_training_items(manifest, model, cfg, log);

  const fs::path ckpt = fs::path(out_dir) / "checkpoint";
  TrainingReport report = run_training(cfg.training, items, model, ckpt);
  json j = to_json(report);
  j["data_log"] = log;
  j["items"] = items.size();
  write_json(j, fs::path(out_dir) / "report.json");
  write_stamp(out_dir, "train", args, cfg);
  out << to_string(report.stage) << ": " << report.iterations << " steps, smoothed loss " << report.initial_smoothed
      << " -> " << report.final_smoothed << '\n';
  return kExitOk;
}

int cmd_restore(const Common& common, const std::vector<std::string>& args, const std::string& lq_dir,
                const std::string& refs_arg, const std::string& out_dir, const std::string& checkpoint,
                std::optional<double> lambda, std::optional<int> steps, std::optional<int> t_start, bool comparison,
                std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  if (lambda) cfg.sampler.lambda_cfg = *lambda;
  if (steps) cfg.sampler.steps = *steps;
  if (t_start) cfg.sampler.t_start = *t_start;
  cfg.validate();

  RestorationModel model(cfg.model);
  if (!checkpoint.empty()) load_model_checkpoint(model, checkpoint);

  // Reference lookup: manifest entries by image_id, a per-image subdirectory,
  // or one shared directory.
  std::optional<DatasetManifest> manifest;
  std::map<std::string, const ManifestEntry*> by_id;
  if (!refs_arg.empty() && fs::is_regular_file(refs_arg)) {
    manifest = load_manifest(refs_arg);
    for (const auto& e : manifest->entries) by_id[e.image_id] = &e;
  }
  auto refs_for = [&](const std::string& id) {
    std::vector<fs::path> paths;
    if (manifest) {
      if (auto it = by_id.find(id); it != by_id.end())
        for (const auto& r : it->second->references) paths.push_back(manifest->resolve(r.path));
    } else if (!refs_arg.empty()) {
      const fs::path sub = fs::path(refs_arg) / id;
      paths = list_images(fs::is_directory(sub) ? sub : fs::path(refs_arg));
    }
    return paths;
  };

  const auto inputs = list_images(lq_dir);
  fs::create_directories(out_dir);
  std::vector<json> records(inputs.size());
  std::mutex warn_mutex;
  parallel_for(inputs.size(), cfg.resolved_jobs(), [&](std::size_t i) {
    const std::string id = inputs[i].stem().string();
    json rec{{"image_id", id}};
    try {
      const Image lq = read_image(inputs[i]);
      std::vector<Image> refs;
      std::vector<std::string> warnings;
      for (const auto& p : refs_for(id)) {
        try {
          refs.push_back(read_image(p));
        } catch (const std::exception& e) {
          warnings.push_back(std::string("reference unreadable: ") + e.what());
        }
      }
      SamplerConfig sc = cfg.sampler;
      sc.seed = derive_seed(cfg.seed, i);
      RestoreResult r = restore(lq, refs, model, sc);
      warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
      const fs::path dst = fs::path(out_dir) / (id + ".png");
      write_png(r.image, dst);
      if (comparison) {
        std::vector<Image> row{lq, r.image};
        for (const auto& ref : refs) row.push_back(fit_to(ref, lq.height()));
        write_png(hconcat(row), fs::path(out_dir) / (id + "_comparison.png"));
      }
      rec["output"] = dst.string();
      rec["references_used"] = r.references_used;
      rec["conditional"] = r.conditional;
      rec["warnings"] = warnings;
    } catch (const std::exception& e) {
      rec["error"] = e.what();
    }
    records[i] = std::move(rec);
  });
  int failures = 0;
  for (const auto& r : records) {
    failures += r.contains("error");
    if (r.contains("warnings"))
      for (const auto& w : r["warnings"]) std::cerr << "warning: " << r["image_id"].get<std::string>() << ": " << w.get<std::string>() << '\n';
  }
  write_json({{"images", records}, {"failures", failures}}, fs::path(out_dir) / "restore.json");
  write_stamp(out_dir, "restore", args, cfg);
  out << "restored " << inputs.size() - failures << " of " << inputs.size() << " images into " << out_dir << '\n';
  return failures == 0 ? kExitOk : kExitFailure;
}

std::optional<json> read_optional_json(const fs::path& dir, const std::string& stem) {
  if (dir.empty()) return std::nullopt;
  const fs::path p = dir / (stem + ".json");
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  return json::parse(in);
}

LandmarkSet to_landmarks(const json& j) {
  LandmarkSet out;
  for (const auto& pt : j) out.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
  return out;
}

int cmd_evaluate(const Common& common, const std::vector<std::string>& args, const std::string& pairs_path,
                 const std::string& out_path, const std::string& landmarks_dir, const std::string& embeddings_dir,
                 const std::vector<std::string>& external_flags, std::ostream& out) {
  AppConfig cfg = resolve_config(common);
  for (std::size_t i = 0; i + 1 < external_flags.size(); i += 2) {
    cfg.metrics.external.push_back({external_flags[i], external_flags[i + 1]});
  }
  cfg.validate();

  std::ifstream in(pairs_path);
  if (!in) throw std::runtime_error("cannot open pair manifest " + pairs_path);
  const json pairs_doc = json::parse(in);
  if (!pairs_doc.contains("pairs") || !pairs_doc["pairs"].is_array()) {
    throw std::runtime_error("pair manifest needs a \"pairs\" array");
  }
  const fs::path base = fs::path(pairs_path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  const RestorationModel model(cfg.model);
  json per_pair = json::array();
  double sum_psnr = 0, sum_ssim = 0, sum_lmd = 0, sum_ids = 0;
  int n = 0, n_lmd = 0, n_ids = 0;
  for (const auto& pr : pairs_doc["pairs"]) {
    const std::string restored_path = pr.at("restored").get<std::string>();
    const std::string reference_path = pr.at("reference").get<std::string>();
    const std::string id = pr.value("id", fs::path(restored_path).stem().string());
    const Image a = read_image(resolve(restored_path));
    const Image b = read_image(resolve(reference_path));
    json row{{"id", id}};
    const double p = psnr(a, b), s = ssim(a, b, cfg.metrics.ssim);
    row["PSNR"] = p;
    row["SSIM"] = s;
    sum_psnr += p;
    sum_ssim += s;
    ++n;

    const auto la = read_optional_json(landmarks_dir, fs::path(restored_path).stem().string());
    const auto lb = read_optional_json(landmarks_dir, fs::path(reference_path).stem().string());
    if (la && lb) {
      const double d = lmd(to_landmarks(*la), to_landmarks(*lb));
      row["LMD"] = d;
      sum_lmd += d;
      ++n_lmd;
    } else {
      row["LMD"] = nullptr;
    }

    const auto ea = read_optional_json(embeddings_dir, fs::path(restored_path).stem().string());
    const auto eb = read_optional_json(embeddings_dir, fs::path(reference_path).stem().string());
    double id_sim = 0.0;
    if (ea && eb) {
      id_sim = ids(ea->get<std::vector<double>>(), eb->get<std::vector<double>>());
    } else {
      id_sim = recognizer_similarity(model, a, b);
    }
    row["IDS"] = id_sim;
    sum_ids += id_sim;
    ++n_ids;
    per_pair.push_back(std::move(row));
  }

  json mean{{"PSNR", n ? json(sum_psnr / n) : json(nullptr)},
            {"SSIM", n ? json(sum_ssim / n) : json(nullptr)},
            {"LMD", n_lmd ? json(sum_lmd / n_lmd) : json(nullptr)},
            {"IDS", n_ids ? json(sum_ids / n_ids) : json(nullptr)}};
  std::vector<std::string> columns{"PSNR", "SSIM", "LMD", "IDS"};
  json external = json::object();
  for (const auto& m : cfg.metrics.external) {
    columns.push_back(m.name);
    const json result = run_external_metric(m, fs::absolute(pairs_path));
    mean[m.name] = result["value"];
    external[m.name] = result;
  }
  json report{{"columns", columns},
              {"mean", mean},
              {"pairs", per_pair},
              {"external", external},
              {"identity_backbone", embeddings_dir.empty() ? cfg.model.recognizer : "embeddings:" + embeddings_dir}};
  write_json(report, out_path);
  write_stamp(fs::path(out_path).parent_path().empty() ? fs::path(".") : fs::path(out_path).parent_path(), "evaluate",
              args, cfg);
  out << mean.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-guided face restoration toolkit", "idrestore"};
  app.set_version_flag("--version", std::string(IDRESTORE_VERSION));
  app.require_subcommand(1);

  Common common;
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "random seed (overrides config)");
  app.add_option("--jobs", common.jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  app.fallthrough();

  std::string in_dir, out_dir, sigma, scale, noise, quality;
  auto* degrade = app.add_subcommand("degrade", "synthesize LQ images from HQ images");
  degrade->add_option("--in", in_dir, "input directory")->required()->check(CLI::ExistingDirectory);
  degrade->add_option("--out", out_dir, "output directory")->required();
  degrade->add_option("--sigma", sigma, "blur width range a,b");
  degrade->add_option("--scale", scale, "scale range a,b");
  degrade->add_option("--noise", noise, "noise range a,b (8-bit units)");
  degrade->add_option("--quality", quality, "JPEG quality range a,b");

  std::string images_dir, pool_out;
  std::optional<int> c1, c2;
  auto* build_pool = app.add_subcommand("build-pool", "cluster images into pose/expression subsets");
  build_pool->add_option("--images", images_dir, "image directory")->required()->check(CLI::ExistingDirectory);
  build_pool->add_option("--out", pool_out, "pool JSON path")->required();
  build_pool->add_option("--c1", c1, "pose clusters");
  build_pool->add_option("--c2", c2, "expression clusters per pose cluster");

  std::string synth_in, pool_path, pool_images, synth_out, restorer;
  std::optional<int> n_refs;
  std::optional<double> delta;
  auto* synth_refs = app.add_subcommand("synth-refs", "restore inputs and synthesize gated reference sets");
  synth_refs->add_option("--in", synth_in, "input image directory")->required()->check(CLI::ExistingDirectory);
  synth_refs->add_option("--pool", pool_path, "pool JSON")->required()->check(CLI::ExistingFile);
  synth_refs->add_option("--pool-images", pool_images, "directory holding the pool images")->required()->check(CLI::ExistingDirectory);
  synth_refs->add_option("--out", synth_out, "output directory")->required();
  synth_refs->add_option("--restorer", restorer, "external restorer command (default: pass-through)");
  synth_refs->add_option("--n", n_refs, "references per image");
  synth_refs->add_option("--delta", delta, "identity similarity threshold");

  std::string dataset_out;
  int identities = 16, per_identity = 5;
  std::optional<int> size;
  auto* synth_dataset = app.add_subcommand("synth-dataset", "write the procedural face corpus");
  synth_dataset->add_option("--out", dataset_out, "output directory")->required();
  synth_dataset->add_option("--identities", identities, "identity count")->check(CLI::NonNegativeNumber);
  synth_dataset->add_option("--per-identity", per_identity, "images per identity")->check(CLI::NonNegativeNumber);
  synth_dataset->add_option("--size", size, "image side in pixels")->check(CLI::Range(8, 4096));

  std::string stage, manifest_path, train_out, resume;
  std::optional<int> iterations;
  auto* train = app.add_subcommand("train", "train the toy model");
  train->add_option("--stage", stage, "one | 1 | 2")->check(CLI::IsMember({"one", "one_stage", "1", "stage1", "2", "stage2"}));
  train->add_option("--manifest", manifest_path, "dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to start from (stage 2: the stage-1 archive)");
  train->add_option("--iterations", iterations, "optimizer steps");

  std::string lq_dir, refs_arg, restore_out, checkpoint;
  std::optional<double> lambda;
  std::optional<int> steps, t_start;
  bool comparison = false;
  auto* restore_cmd = app.add_subcommand("restore", "restore LQ images guided by references");
  restore_cmd->add_option("--lq", lq_dir, "LQ image directory")->required()->check(CLI::ExistingDirectory);
  restore_cmd->add_option("--refs", refs_arg, "reference directory or dataset manifest");
  restore_cmd->add_option("--out", restore_out, "output directory")->required();
  restore_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint");
  restore_cmd->add_option("--lambda", lambda, "guidance scale");
  restore_cmd->add_option("--steps", steps, "sampling steps");
  restore_cmd->add_option("--t-start", t_start, "timestep at which the LQ latent is injected");
  restore_cmd->add_flag("--emit-comparison", comparison, "also write LQ|restored|refs grids");

  std::string pairs_path, eval_out, landmarks_dir, embeddings_dir;
  std::vector<std::string> external_flags;
  auto* evaluate = app.add_subcommand("evaluate", "compute PSNR/SSIM/LMD/IDS over image pairs");
  evaluate->add_option("--pairs", pairs_path, "pair manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", eval_out, "report path")->required();
  evaluate->add_option("--landmarks", landmarks_dir, "directory of <stem>.json landmark lists");
  evaluate->add_option("--embeddings", embeddings_dir, "directory of <stem>.json embedding vectors");
  evaluate->add_option("--external-metric", external_flags, "NAME CMD")->expected(2)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::Success&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  auto* sub = app.get_subcommands().front();
  try {
    if (sub == degrade) return cmd_degrade(common, args, in_dir, out_dir, sigma, scale, noise, quality, out);
    if (sub == build_pool) return cmd_build_pool(common, args, images_dir, pool_out, c1, c2, out);
    if (sub == synth_refs)
      return cmd_synth_refs(common, args, synth_in, pool_path, pool_images, synth_out, restorer, n_refs, delta, out);
    if (sub == synth_dataset) return cmd_synth_dataset(common, args, dataset_out, identities, per_identity, size, out);
    if (sub == train) return cmd_train(common, args, stage, manifest_path, train_out, resume, iterations, out);
    if (sub == restore_cmd)
      return cmd_restore(common, args, lq_dir, refs_arg, restore_out, checkpoint, lambda, steps, t_start, comparison, out);
    if (sub == evaluate) return cmd_evaluate(common, args, pairs_path, eval_out, landmarks_dir, embeddings_dir, external_flags, out);
  } catch (const CLI::ValidationError& e) {
    err << json{{"error", e.what()}, {"command", sub->get_name()}, {"kind", "usage"}}.dump() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << json{{"error", e.what()}, {"command", sub->get_name()}, {"kind", "config"}}.dump() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << json{{"error", e.what()}, {"command", sub->get_name()}, {"kind", "runtime"}}.dump() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace idr::cli
