#include "idrestore/refpool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "idrestore/parallel.hpp"

namespace idr {

void AttributeVector::validate() const {
  if (theta.size() != kPoseDims) throw std::invalid_argument("attribute theta must have 6 entries");
  if (psi.size() != kExpressionDims) throw std::invalid_argument("attribute psi must have 50 entries");
  for (double v : theta)
    if (!std::isfinite(v)) throw std::invalid_argument("attribute theta is not finite");
  for (double v : psi)
    if (!std::isfinite(v)) throw std::invalid_argument("attribute psi is not finite");
}

namespace {

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Nearest centroid; ties go to the lower index.
int nearest(const std::vector<double>& v, const std::vector<std::vector<double>>& centroids, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sqdist(v, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

std::vector<std::vector<double>> kmeanspp(const std::vector<std::vector<double>>& x, int k, Rng& rng) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> centroids;
  centroids.push_back(x[uniform_int(rng, 0, n - 1)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      nearest(x[i], centroids, &d2[i]);
      total += d2[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double u = uniform_real(rng, 0.0, total);
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = uniform_int(rng, 0, n - 1);
    }
    centroids.push_back(x[pick]);
  }
  return centroids;
}

}  // namespace

double within_cluster_ss(const std::vector<std::vector<double>>& vectors, const std::vector<int>& assignments,
                         const std::vector<std::vector<double>>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) s += sqdist(vectors[i], centroids[assignments[i]]);
  return s;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, int k, Rng& rng, int max_iters) {
  const int n = static_cast<int>(vectors.size());
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > n) throw std::invalid_argument("kmeans: k exceeds the number of vectors");
  if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");
  const std::size_t dim = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != dim) throw std::invalid_argument("kmeans: vectors differ in length");

  KMeansResult r;
  r.centroids = kmeanspp(vectors, k, rng);
  r.assignments.assign(n, -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest(vectors[i], r.centroids);
      changed |= c != r.assignments[i];
      r.assignments[i] = c;
    }
    r.wcss_history.push_back(within_cluster_ss(vectors, r.assignments, r.centroids));
    r.iterations = it + 1;
    if (!changed) {
      r.converged = true;
      break;
    }

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[r.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[r.assignments[i]][d] += vectors[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) r.centroids[c][d] = sums[c][d] / counts[c];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      int far = -1;
      double far_d = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = sqdist(vectors[i], r.centroids[r.assignments[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) continue;
      r.centroids[c] = vectors[far];
      r.assignments[far] = c;
      counts[c] = 1;
    }
  }
  return r;
}

std::size_t PosePool::image_count() const {
  std::size_t n = 0;
  for (const auto& s : subsets) n += s.size();
  return n;
}

int PosePool::nonempty_count() const {
  return static_cast<int>(std::count_if(subsets.begin(), subsets.end(), [](const auto& s) { return !s.empty(); }));
}

PosePool build_pose_pool(std::span<const PoolEntry> entries, int c1, int c2, Rng& rng) {
  if (c1 < 1 || c2 < 1) throw std::invalid_argument("build_pose_pool: c1 and c2 must be >= 1");
  if (static_cast<std::size_t>(c1) * c2 > entries.size()) {
    throw std::invalid_argument("build_pose_pool: c1 * c2 exceeds the number of usable images");
  }
  PosePool pool;
  pool.c1 = c1;
  pool.c2 = c2;
  pool.subsets.assign(static_cast<std::size_t>(c1) * c2, {});

  std::vector<std::vector<double>> thetas;
  for (const auto& e : entries) {
    e.attributes.validate();
    thetas.push_back(e.attributes.theta);
  }
  const KMeansResult level1 = kmeans(thetas, c1, rng);
  pool.level1_centroids = level1.centroids;
  pool.level2_centroids.resize(c1);

  for (int i = 0; i < c1; ++i) {
    std::vector<int> members;
    for (std::size_t e = 0; e < entries.size(); ++e)
      if (level1.assignments[e] == i) members.push_back(static_cast<int>(e));
    if (members.empty()) continue;
    std::vector<std::vector<double>> psis;
    for (int m : members) psis.push_back(entries[m].attributes.psi);
    const int k2 = std::min<int>(c2, static_cast<int>(members.size()));
    const KMeansResult level2 = kmeans(psis, k2, rng);
    pool.level2_centroids[i] = level2.centroids;
    for (std::size_t m = 0; m < members.size(); ++m) {
      pool.subsets[static_cast<std::size_t>(i) * c2 + level2.assignments[m]].push_back(entries[members[m]].id);
    }
  }
  return pool;
}

PosePool build_pose_pool(std::span<const NamedImage> images, const AttributeExtractor& extractor, int c1, int c2,
                         Rng& rng, int jobs) {
  const std::size_t n = images.size();
  std::vector<std::optional<AttributeVector>> attrs(n);
  std::vector<std::string> errors(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        AttributeVector a = extractor.extract(images[i].image);
        a.validate();
        attrs[i] = std::move(a);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  parallel_for(n, jobs, [&](std::size_t i) { work(i, i + 1); });

  std::vector<PoolEntry> entries;
  std::vector<SkippedItem> skipped;
  for (std::size_t i = 0; i < n; ++i) {
    if (attrs[i]) {
      entries.push_back({images[i].id, std::move(*attrs[i])});
    } else {
      skipped.push_back({images[i].id, errors[i]});
    }
  }
  PosePool pool = build_pose_pool(entries, c1, c2, rng);
  pool.skipped = std::move(skipped);
  return pool;
}

nlohmann::json to_json(const PosePool& pool) {
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : pool.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
  return {{"c1", pool.c1},
          {"c2", pool.c2},
          {"subsets", pool.subsets},
          {"centroids", {{"level1", pool.level1_centroids}, {"level2", pool.level2_centroids}}},
          {"skipped", skipped}};
}

PosePool pose_pool_from_json(const nlohmann::json& j) {
  PosePool pool;
  pool.c1 = j.at("c1").get<int>();
  pool.c2 = j.at("c2").get<int>();
  pool.subsets = j.at("subsets").get<std::vector<std::vector<std::string>>>();
  if (pool.c1 < 1 || pool.c2 < 1 || pool.subsets.size() != static_cast<std::size_t>(pool.c1) * pool.c2) {
    throw std::invalid_argument("pose pool: subsets do not match c1 * c2");
  }
  const auto& c = j.at("centroids");
  pool.level1_centroids = c.at("level1").get<std::vector<std::vector<double>>>();
  pool.level2_centroids = c.at("level2").get<std::vector<std::vector<std::vector<double>>>>();
  if (j.contains("skipped")) {
    for (const auto& s : j["skipped"]) pool.skipped.push_back({s.at("id"), s.at("reason")});
  }
  return pool;
}

std::string sample_pose_reference(const PosePool& pool, int subset, Rng& rng) {
  if (subset < 0 || subset >= static_cast<int>(pool.subsets.size())) {
    throw std::invalid_argument("sample_pose_reference: subset index out of range");
  }
  const auto& s = pool.subsets[subset];
  if (s.empty()) throw EmptySubsetError("pose subset " + std::to_string(subset) + " is empty");
  return s[uniform_int(rng, 0, static_cast<int>(s.size()) - 1)];
}

std::string sample_pose_reference_or_nearest(const PosePool& pool, int subset, Rng& rng, std::string* note) {
  try {
    return sample_pose_reference(pool, subset, rng);
  } catch (const EmptySubsetError&) {
  }
  const int part = subset / pool.c2;
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(pool.subsets.size()); ++j) {
    if (pool.subsets[j].empty()) continue;
    const int other = j / pool.c2;
    const double d = pool.level1_centroids.empty() ? 0.0 : sqdist(pool.level1_centroids[part], pool.level1_centroids[other]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best < 0) throw EmptySubsetError("pose pool has no nonempty subsets");
  if (note) *note = "subset " + std::to_string(subset) + " empty; fell back to subset " + std::to_string(best);
  return sample_pose_reference(pool, best, rng);
}

void IdentityGateConfig::validate() const {
  if (!(delta >= -1.0 && delta <= 1.0)) throw std::invalid_argument("identity gate: delta must be in [-1, 1]");
  if (max_attempts < 1) throw std::invalid_argument("identity gate: max_attempts must be >= 1");
}

int SynthesisReport::accepted() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const SlotReport& s) { return s.accepted; }));
}

int SynthesisReport::abandoned() const { return static_cast<int>(slots.size()) - accepted(); }

nlohmann::json to_json(const SynthesisReport& report) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : report.slots) {
    slots.push_back({{"slot", s.slot},
                     {"subset", s.subset},
                     {"attempts", s.attempts()},
                     {"pose_ids", s.pose_ids},
                     {"similarities", s.similarities},
                     {"errors", s.errors},
                     {"accepted", s.accepted}});
  }
  return {{"slots", slots}, {"accepted", report.accepted()}, {"abandoned", report.abandoned()}};
}

SynthesisResult synthesize_reference_set(const Image& identity, const PosePool& pool, const PoseImageLookup& pose_image,
                                         const IdentityGenerator& generator, const SimilarityFn& similarity,
                                         const IdentityGateConfig& gate, int n_refs, Rng& rng) {
  if (n_refs < 1) throw std::invalid_argument("synthesize_reference_set: n_refs must be >= 1");
  gate.validate();
  std::vector<int> nonempty;
  for (int j = 0; j < static_cast<int>(pool.subsets.size()); ++j)
    if (!pool.subsets[j].empty()) nonempty.push_back(j);
  if (nonempty.empty()) throw EmptySubsetError("pose pool has no nonempty subsets");

  const std::uint64_t base = rng();
  SynthesisResult result;
  for (int slot = 0; slot < n_refs; ++slot) {
    Rng slot_rng(derive_seed(base, static_cast<std::uint64_t>(slot)));
    SlotReport rep;
    rep.slot = slot;
    rep.subset = nonempty[uniform_int(slot_rng, 0, static_cast<int>(nonempty.size()) - 1)];
    for (int attempt = 0; attempt < gate.max_attempts; ++attempt) {
      const std::string pose_id = sample_pose_reference(pool, rep.subset, slot_rng);
      rep.pose_ids.push_back(pose_id);
      Image candidate;
      double sim = 0.0;
      try {
        candidate = generator.generate(identity, pose_image(pose_id), slot_rng());
        sim = similarity(identity, candidate);
      } catch (const std::exception& e) {
        rep.errors.push_back(e.what());
        break;
      }
      rep.similarities.push_back(sim);
      if (sim >= gate.delta) {
        rep.accepted = true;
        result.references.push_back(std::move(candidate));
        result.similarities.push_back(sim);
        break;
      }
    }
    result.report.slots.push_back(std::move(rep));
  }
  return result;
}

namespace {

struct Moments {
  double mass = 0.0;
  double cx = 0.0, cy = 0.0;
  double angle = 0.0;
  double major = 0.0, minor = 0.0;  // eigenvalues of the covariance
  double skew = 0.0;
  std::vector<double> background;
};

Moments image_moments(const Image& img) {
  if (img.empty()) throw std::runtime_error("empty image");
  const int h = img.height(), w = img.width(), ch = img.channels();
  Moments m;
  m.background.assign(ch, 0.0);
  int border = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (y == 0 || x == 0 || y == h - 1 || x == w - 1) {
        for (int c = 0; c < ch; ++c) m.background[c] += img.at(y, x, c);
        ++border;
      }
  for (double& b : m.background) b /= border;

  std::vector<double> wt(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int c = 0; c < ch; ++c) s += (img.at(y, x, c) - m.background[c]) * (img.at(y, x, c) - m.background[c]);
      const double v = std::sqrt(s);
      wt[static_cast<std::size_t>(y) * w + x] = v;
      m.mass += v;
      m.cx += v * x;
      m.cy += v * y;
    }
  if (!(m.mass > 1e-9)) throw std::runtime_error("no foreground found");
  m.cx /= m.mass;
  m.cy /= m.mass;
  double mu20 = 0, mu02 = 0, mu11 = 0, mu30 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = wt[static_cast<std::size_t>(y) * w + x];
      const double dx = x - m.cx, dy = y - m.cy;
      mu20 += v * dx * dx;
      mu02 += v * dy * dy;
      mu11 += v * dx * dy;
      mu30 += v * dx * dx * dx;
    }
  mu20 /= m.mass;
  mu02 /= m.mass;
  mu11 /= m.mass;
  mu30 /= m.mass;
  m.angle = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
  const double tr = mu20 + mu02, det = mu20 * mu02 - mu11 * mu11;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  m.major = tr / 2.0 + disc;
  m.minor = std::max(0.0, tr / 2.0 - disc);
  const double side = std::max(h, w);
  m.skew = mu30 / (side * side * side);
  return m;
}

double bilinear(const Image& img, double y, double x, int c, double outside) {
  if (y < 0 || x < 0 || y > img.height() - 1 || x > img.width() - 1) return outside;
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
         fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

}  // namespace

AttributeVector MomentAttributeExtractor::extract(const Image& image) const {
  const Moments m = image_moments(image);
  const double side = std::max(image.height(), image.width());
  AttributeVector a;
  a.theta = {m.cx / image.width() - 0.5,
             m.cy / image.height() - 0.5,
             m.angle,
             m.major > 0.0 ? std::sqrt(m.minor / m.major) : 1.0,
             std::sqrt(m.major + m.minor) / side,
             m.skew * 100.0};

  const Image luma = to_luma(image);
  const int top = image.height() / 2;
  const Image lower = resize_bicubic(crop(luma, top, 0, image.height() - top, image.width()), 5, 10);
  a.psi.assign(lower.values().begin(), lower.values().end());
  const double mean = std::accumulate(a.psi.begin(), a.psi.end(), 0.0) / a.psi.size();
  for (double& v : a.psi) v -= mean;
  return a;
}

Image GeometricIdentityGenerator::generate(const Image& identity, const Image& pose, std::uint64_t seed) const {
  const Moments mi = image_moments(identity);
  const Moments mp = image_moments(pose);
  const double si = std::sqrt(mi.major + mi.minor), sp = std::sqrt(mp.major + mp.minor);
  const double scale = sp > 0.0 ? si / sp : 1.0;
  const double rot = mi.angle - mp.angle;
  const double cr = std::cos(rot), sr = std::sin(rot);

  Image out(pose.height(), pose.width(), identity.channels());
  Rng rng(seed);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const double dx = x - mp.cx, dy = y - mp.cy;
      const double qx = mi.cx + scale * (cr * dx - sr * dy);
      const double qy = mi.cy + scale * (sr * dx + cr * dy);
      for (int c = 0; c < out.channels(); ++c) {
        out.at(y, x, c) = bilinear(identity, qy, qx, c, mi.background[c]) + noise_ * standard_normal(rng);
      }
    }
  out.clamp01();
  return out;
}

}  // namespace idr
