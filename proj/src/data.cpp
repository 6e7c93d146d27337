#include "idrestore/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "idrestore/image_io.hpp"

namespace idr {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path DatasetManifest::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

namespace {

int line_of(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line on which each element of the top-level "entries" array starts.
std::vector<int> entry_lines(const std::string& text) {
  std::vector<int> lines;
  int depth = 0, line = 1;
  bool in_string = false, escape = false;
  std::string token, last_string, key;
  for (char ch : text) {
    if (ch == '\n') ++line;
    if (in_string) {
      if (escape) {
        escape = false;
        token += ch;
      } else if (ch == '\\') {
        escape = true;
      } else if (ch == '"') {
        in_string = false;
        if (depth == 1) last_string = token;
      } else {
        token += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_string = true;
        token.clear();
        break;
      case ':':
        if (depth == 1) key = last_string;
        break;
      case '{':
      case '[':
        if (depth == 2 && key == "entries") lines.push_back(line);
        ++depth;
        break;
      case '}':
      case ']':
        --depth;
        break;
      default:
        if (depth == 2 && key == "entries" && !std::isspace(static_cast<unsigned char>(ch)) && ch != ',') {
          // scalar entry (invalid, but still worth locating)
          if (lines.empty() || lines.back() != -line) lines.push_back(-line);
        }
        break;
    }
  }
  for (int& l : lines) l = std::abs(l);
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
  return lines;
}

std::string require_string(const json& obj, const char* key, int line, const std::string& where) {
  if (!obj.contains(key)) throw ManifestError(where + ": missing \"" + key + "\"", line);
  if (!obj[key].is_string()) throw ManifestError(where + ": \"" + key + "\" must be a string", line);
  std::string s = obj[key].get<std::string>();
  if (s.empty()) throw ManifestError(where + ": \"" + key + "\" must not be empty", line);
  return s;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ManifestError(std::string("invalid JSON: ") + e.what(), line_of(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  if (!root.is_object()) throw ManifestError("manifest must be a JSON object", 1);
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (it.key() != "schema_version" && it.key() != "entries") throw ManifestError("unknown key \"" + it.key() + "\"", 0);
  }
  if (!root.contains("schema_version") || !root["schema_version"].is_number_integer()) {
    throw ManifestError("\"schema_version\" must be an integer", 1);
  }
  DatasetManifest m;
  m.base_dir = base_dir;
  m.schema_version = root["schema_version"].get<int>();
  if (m.schema_version < 1 || m.schema_version > kManifestSchemaVersion) {
    throw ManifestError("unsupported schema_version " + std::to_string(m.schema_version), 0);
  }
  if (!root.contains("entries") || !root["entries"].is_array()) throw ManifestError("\"entries\" must be an array", 0);

  const auto lines = entry_lines(text);
  std::set<std::string> ids;
  const json& entries = root["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int line = i < lines.size() ? lines[i] : 0;
    const std::string where = "entry " + std::to_string(i);
    const json& e = entries[i];
    if (!e.is_object()) throw ManifestError(where + " must be an object", line);
    for (auto it = e.begin(); it != e.end(); ++it) {
      static const std::set<std::string> allowed{"image_id", "path", "identity_id", "references", "flags"};
      if (!allowed.contains(it.key())) throw ManifestError(where + ": unknown key \"" + it.key() + "\"", line);
    }
    ManifestEntry entry;
    entry.image_id = require_string(e, "image_id", line, where);
    entry.path = require_string(e, "path", line, where);
    entry.identity_id = require_string(e, "identity_id", line, where);
    if (!ids.insert(entry.image_id).second) throw ManifestError(where + ": duplicate image_id \"" + entry.image_id + "\"", line);
    if (e.contains("references")) {
      if (!e["references"].is_array()) throw ManifestError(where + ": \"references\" must be an array", line);
      for (const json& r : e["references"]) {
        ReferenceRecord rec;
        if (r.is_string()) {
          rec.path = r.get<std::string>();
          rec.identity_id = entry.identity_id;
        } else if (r.is_object()) {
          rec.path = require_string(r, "path", line, where + " reference");
          rec.identity_id = r.contains("identity_id") ? require_string(r, "identity_id", line, where + " reference")
                                                      : entry.identity_id;
        } else {
          throw ManifestError(where + ": references must be strings or objects", line);
        }
        if (rec.identity_id != entry.identity_id) {
          throw ManifestError(where + ": reference " + rec.path + " has identity \"" + rec.identity_id +
                                  "\" but the entry is \"" + entry.identity_id + "\"",
                              line);
        }
        entry.references.push_back(std::move(rec));
      }
    }
    if (e.contains("flags")) {
      if (!e["flags"].is_array()) throw ManifestError(where + ": \"flags\" must be an array", line);
      for (const json& f : e["flags"]) {
        if (!f.is_string()) throw ManifestError(where + ": flags must be strings", line);
        entry.flags.push_back(f.get<std::string>());
      }
    }
    if (!fs::exists(m.resolve(entry.path))) m.missing.push_back({entry.image_id, entry.path});
    for (const auto& r : entry.references)
      if (!fs::exists(m.resolve(r.path))) m.missing.push_back({entry.image_id, r.path});
    m.entries.push_back(std::move(entry));
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

json to_json(const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json refs = json::array();
    for (const auto& r : e.references) refs.push_back({{"path", r.path}, {"identity_id", r.identity_id}});
    json j = {{"image_id", e.image_id}, {"path", e.path}, {"identity_id", e.identity_id}, {"references", refs}};
    if (!e.flags.empty()) j["flags"] = e.flags;
    entries.push_back(std::move(j));
  }
  return {{"schema_version", manifest.schema_version}, {"entries", entries}};
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json(manifest).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
}

std::vector<std::string> sample_references(const ManifestEntry& entry, int n, Rng& rng) {
  const int available = static_cast<int>(entry.references.size());
  if (n < 1 || n > available) {
    throw std::invalid_argument("sample_references: requested " + std::to_string(n) + " of " +
                                std::to_string(available) + " references for " + entry.image_id);
  }
  std::vector<std::string> out;
  for (int i : sample_without_replacement(available, n, rng)) out.push_back(entry.references[i].path);
  return out;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace

RealWorldIngest build_real_world_ref_manifest(const fs::path& lq_dir, const fs::path& out_dir,
                                              const RealWorldOptions& options, const IdentityGenerator& generator,
                                              const PosePool& pool, const PoseImageLookup& pose_image,
                                              const SimilarityFn& similarity, Rng& rng) {
  if (options.references_per_image < 1) throw std::invalid_argument("references_per_image must be >= 1");
  options.gate.validate();
  RealWorldIngest result;
  result.manifest.base_dir = out_dir;
  result.synthesis = json::object();
  fs::create_directories(out_dir / "restored");
  fs::create_directories(out_dir / "refs");

  const std::uint64_t base = rng();
  const auto inputs = list_images(lq_dir);
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    const fs::path& in = inputs[idx];
    const std::string id = in.stem().string();
    const fs::path restored_rel = fs::path("restored") / (id + ".png");
    const fs::path restored_abs = out_dir / restored_rel;
    Image restored;
    try {
      if (options.restorer_command.empty()) {
        restored = read_image(in);
        write_png(restored, restored_abs);
      } else {
        const std::string cmd = options.restorer_command + " " + shell_quote(in.string()) + " " + shell_quote(restored_abs.string());
        const int status = std::system(cmd.c_str());
        if (status != 0) throw std::runtime_error("restorer exited with status " + std::to_string(status));
        restored = read_image(restored_abs);
      }
    } catch (const std::exception& e) {
      result.log.push_back({id, std::string("skipped: ") + e.what()});
      continue;
    }

    Rng item_rng(derive_seed(base, idx));
    SynthesisResult synth = synthesize_reference_set(restored, pool, pose_image, generator, similarity, options.gate,
                                                     options.references_per_image, item_rng);
    ManifestEntry entry{id, restored_rel.string(), id, {}, {}};
    for (std::size_t k = 0; k < synth.references.size(); ++k) {
      const fs::path rel = fs::path("refs") / (id + "_" + std::to_string(k) + ".png");
      write_png(synth.references[k], out_dir / rel);
      entry.references.push_back({rel.string(), id});
    }
    if (entry.references.empty()) {
      entry.flags.push_back("no_references");
      result.log.push_back({id, "no reference passed the identity gate"});
    }
    result.synthesis[id] = to_json(synth.report);
    result.manifest.entries.push_back(std::move(entry));
  }
  save_manifest(result.manifest, out_dir / "manifest.json");
  return result;
}

FaceIdentity random_face_identity(Rng& rng) {
  FaceIdentity id{};
  const double tone = uniform_real(rng, 0.35, 0.95);
  id.skin[0] = std::min(1.0, tone + uniform_real(rng, 0.0, 0.1));
  id.skin[1] = tone * uniform_real(rng, 0.7, 0.85);
  id.skin[2] = tone * uniform_real(rng, 0.5, 0.75);
  const double hair = uniform_real(rng, 0.05, 0.7);
  id.hair[0] = hair * uniform_real(rng, 0.8, 1.3);
  id.hair[1] = hair * uniform_real(rng, 0.6, 1.0);
  id.hair[2] = hair * uniform_real(rng, 0.4, 0.9);
  for (double& c : id.hair) c = std::min(c, 1.0);
  id.iris[0] = uniform_real(rng, 0.05, 0.5);
  id.iris[1] = uniform_real(rng, 0.1, 0.6);
  id.iris[2] = uniform_real(rng, 0.1, 0.8);
  id.background[0] = uniform_real(rng, 0.75, 0.95);
  id.background[1] = uniform_real(rng, 0.75, 0.95);
  id.background[2] = uniform_real(rng, 0.75, 0.95);
  id.face_aspect = uniform_real(rng, 0.72, 0.92);
  id.eye_spacing = uniform_real(rng, 0.28, 0.42);
  id.eye_size = uniform_real(rng, 0.045, 0.075);
  id.nose_length = uniform_real(rng, 0.08, 0.16);
  id.mouth_width = uniform_real(rng, 0.14, 0.26);
  id.hair_volume = uniform_real(rng, 0.0, 1.0);
  return id;
}

FacePose random_face_pose(Rng& rng) {
  return {uniform_real(rng, -1.0, 1.0), uniform_real(rng, -1.0, 1.0), uniform_real(rng, -0.35, 0.35),
          uniform_real(rng, 0.85, 1.1)};
}

FaceExpression random_face_expression(Rng& rng) {
  return {uniform_real(rng, 0.0, 1.0), uniform_real(rng, -1.0, 1.0), uniform_real(rng, -1.0, 1.0),
          uniform_real(rng, 0.3, 1.0)};
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry, angle;
  double color[3];

  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

Image render_face(const FaceIdentity& id, const FacePose& pose, const FaceExpression& ex, int size) {
  if (size < 8) throw std::invalid_argument("render_face: size must be >= 8");
  // Face-local coordinates (unit = image side) are rotated by roll about the
  // head center; yaw and pitch shift inner features toward the turn.
  const double hx = 0.5 + 0.06 * pose.yaw, hy = 0.52 + 0.04 * pose.pitch;
  const double s = pose.scale;
  const double ca = std::cos(pose.roll), sa = std::sin(pose.roll);
  auto place = [&](double lx, double ly) {
    return std::pair{hx + s * (ca * lx - sa * ly), hy + s * (sa * lx + ca * ly)};
  };
  std::vector<Ellipse> layers;
  auto add = [&](double lx, double ly, double rx, double ry, double local_angle, const double* color, double shade = 1.0) {
    auto [x, y] = place(lx, ly);
    Ellipse e{x, y, s * rx, s * ry, pose.roll + local_angle, {}};
    for (int c = 0; c < 3; ++c) e.color[c] = std::clamp(color[c] * shade, 0.0, 1.0);
    layers.push_back(e);
  };

  const double fy = 0.3;
  const double fx = fy * id.face_aspect;
  add(0.0, -0.08, fx * (1.05 + 0.2 * id.hair_volume), fy * (0.95 + 0.1 * id.hair_volume), 0.0, id.hair);
  add(0.0, 0.02, fx, fy, 0.0, id.skin);
  // Features drift toward the yaw direction and with pitch.
  const double ox = 0.36 * pose.yaw * fx, oy = 0.05 * pose.pitch;
  const double ey = -0.04 + oy;
  const double eye_h = id.eye_size * ex.eye_open;
  const double white[3] = {0.97, 0.97, 0.97};
  const double lips[3] = {0.7, 0.2, 0.25};
  const double mouth_in[3] = {0.25, 0.05, 0.08};
  for (int side : {-1, 1}) {
    const double foreshorten = 1.0 - 0.25 * side * pose.yaw;
    const double exx = ox + side * id.eye_spacing * fx * foreshorten;
    add(exx, ey, id.eye_size * 1.3 * foreshorten, eye_h, 0.0, white);
    add(exx, ey, id.eye_size * 0.6 * foreshorten, std::min(eye_h, id.eye_size * 0.6), 0.0, id.iris);
    add(exx, ey - id.eye_size * (1.6 + 0.6 * ex.brow_raise), id.eye_size * 1.5 * foreshorten, 0.012,
        -side * 0.15 * ex.brow_raise, id.hair, 0.7);
  }
  add(ox * 1.2, 0.03 + oy + id.nose_length / 2.0, 0.025, id.nose_length / 2.0, 0.0, id.skin, 0.8);
  const double my = 0.15 + oy;
  const double mw = id.mouth_width / 2.0 * (1.0 + 0.3 * ex.smile);
  add(ox, my, mw, 0.018 + 0.05 * ex.mouth_open, 0.0, lips);
  if (ex.mouth_open > 0.15) add(ox, my, mw * 0.7, 0.04 * ex.mouth_open, 0.0, mouth_in);

  constexpr int kSuper = 3;
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = (x + (sx + 0.5) / kSuper) / size, py = (y + (sy + 0.5) / kSuper) / size;
          const double* color = id.background;
          for (const Ellipse& e : layers)
            if (e.contains(px, py)) color = e.color;
          for (int c = 0; c < 3; ++c) acc[c] += color[c];
        }
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = acc[c] / (kSuper * kSuper);
    }
  }
  return img;
}

std::vector<CorpusImage> generate_corpus(int identities, int per_identity, int size, std::uint64_t seed) {
  if (identities < 0 || per_identity < 0) throw std::invalid_argument("generate_corpus: counts must be >= 0");
  std::vector<CorpusImage> out;
  for (int i = 0; i < identities; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const FaceIdentity face = random_face_identity(rng);
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "id%04d", i);
    for (int k = 0; k < per_identity; ++k) {
      const FacePose pose = random_face_pose(rng);
      const FaceExpression expr = random_face_expression(rng);
      char imbuf[48];
      std::snprintf(imbuf, sizeof imbuf, "%s_%02d", idbuf, k);
      out.push_back({imbuf, idbuf, render_face(face, pose, expr, size)});
    }
  }
  return out;
}

DatasetManifest write_corpus(std::span<const CorpusImage> corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir / "images");
  DatasetManifest m;
  m.base_dir = out_dir;
  for (const auto& c : corpus) write_png(c.image, out_dir / "images" / (c.image_id + ".png"));
  for (const auto& c : corpus) {
    ManifestEntry e{c.image_id, (fs::path("images") / (c.image_id + ".png")).string(), c.identity_id, {}, {}};
    for (const auto& other : corpus) {
      if (other.identity_id == c.identity_id && other.image_id != c.image_id) {
        e.references.push_back({(fs::path("images") / (other.image_id + ".png")).string(), other.identity_id});
      }
    }
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace idr
