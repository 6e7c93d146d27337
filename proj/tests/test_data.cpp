#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "idrestore/data.hpp"
#include "idrestore/image_io.hpp"
#include "test_util.hpp"

using namespace idr;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct IngestFixture {
  fs::path lq_dir;
  std::vector<CorpusImage> corpus;
  PosePool pool;
  std::map<std::string, Image> by_id;
  GeometricIdentityGenerator generator;

  explicit IngestFixture(const fs::path& root) {
    lq_dir = root / "lq";
    fs::create_directories(lq_dir);
    corpus = generate_corpus(3, 4, 32, 7);
    std::vector<NamedImage> named;
    for (const auto& c : corpus) {
      named.push_back({c.image_id, c.image});
      by_id[c.image_id] = c.image;
    }
    Rng rng(1);
    pool = build_pose_pool(named, MomentAttributeExtractor{}, 2, 2, rng);
    for (int i = 0; i < 3; ++i) write_png(corpus[i * 4].image, lq_dir / ("face" + std::to_string(i) + ".png"));
  }

  PoseImageLookup lookup() const {
    return [this](const std::string& id) { return by_id.at(id); };
  }
};

}  // namespace

TEST_CASE("minimal manifest parses") {
  const auto m = parse_manifest(R"({"schema_version": 1, "entries": [
    {"image_id": "a", "path": "a.png", "identity_id": "p1", "references": ["r.png", {"path": "s.png", "identity_id": "p1"}]}
  ]})");
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].references.size() == 2);
  CHECK(m.entries[0].references[0].identity_id == "p1");
  CHECK(m.missing.size() == 3);
}

TEST_CASE("empty entry list is valid") {
  const auto m = parse_manifest(R"({"schema_version": 1, "entries": []})");
  CHECK(m.entries.empty());
  CHECK(m.missing.empty());
}

TEST_CASE("schema violations carry line context") {
  const std::string mismatch = "{\"schema_version\": 1, \"entries\": [\n"
                               "  {\"image_id\": \"a\", \"path\": \"a.png\", \"identity_id\": \"p1\"},\n"
                               "  {\"image_id\": \"b\", \"path\": \"b.png\", \"identity_id\": \"p1\",\n"
                               "   \"references\": [{\"path\": \"x.png\", \"identity_id\": \"p2\"}]}\n"
                               "]}";
  try {
    parse_manifest(mismatch);
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).rfind("line 3: ", 0) == 0);
  }
  CHECK_THROWS_AS(parse_manifest(R"({"schema_version": 1, "entries": [{"image_id": "a", "path": "a.png"}]})"),
                  ManifestError);
  CHECK_THROWS_AS(parse_manifest(R"({"schema_version": 1, "entries": [], "extra": 1})"), ManifestError);
  CHECK_THROWS_AS(parse_manifest(R"({"entries": []})"), ManifestError);
  CHECK_THROWS_AS(parse_manifest(R"({"schema_version": 1, "entries": [
    {"image_id": "a", "path": "a.png", "identity_id": "p"},
    {"image_id": "a", "path": "b.png", "identity_id": "p"}]})"),
                  ManifestError);
  CHECK_THROWS_AS(parse_manifest("{not json"), ManifestError);
}

TEST_CASE("manifest save and load round trip") {
  const auto dir = test::temp_dir("manifest_rt");
  const auto corpus = generate_corpus(2, 3, 24, 3);
  const auto written = write_corpus(corpus, dir);
  const auto loaded = load_manifest(dir / "manifest.json");
  CHECK(loaded.entries.size() == 6);
  CHECK(loaded.missing.empty());
  CHECK(to_json(loaded) == to_json(written));
  for (const auto& e : loaded.entries) {
    CHECK(e.references.size() == 2);
    for (const auto& r : e.references) {
      CHECK(r.identity_id == e.identity_id);
      CHECK(fs::exists(loaded.resolve(r.path)));
    }
  }
}

TEST_CASE("reference sampling") {
  ManifestEntry e{"x", "x.png", "p", {{"a", "p"}, {"b", "p"}, {"c", "p"}, {"d", "p"}}, {}};
  Rng rng(4);
  auto all = sample_references(e, 4, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::string>{"a", "b", "c", "d"});
  std::map<std::string, int> counts;
  for (int i = 0; i < 4000; ++i) counts[sample_references(e, 1, rng)[0]]++;
  for (const auto& [k, v] : counts) CHECK(std::abs(v / 4000.0 - 0.25) <= 0.03);
  for (int i = 0; i < 200; ++i) {
    const auto three = sample_references(e, 3, rng);
    CHECK(std::set<std::string>(three.begin(), three.end()).size() == 3);
  }
  CHECK_THROWS_AS(sample_references(e, 5, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_references(e, 0, rng), std::invalid_argument);
}

TEST_CASE("real-world ingest with pass-through restorer and accepting gate") {
  const auto root = test::temp_dir("ingest_accept");
  IngestFixture fx(root);
  Rng rng(5);
  RealWorldOptions opt;
  opt.references_per_image = 2;
  const auto out = build_real_world_ref_manifest(fx.lq_dir, root / "out", opt, fx.generator, fx.pool, fx.lookup(),
                                                 [](const Image&, const Image&) { return 1.0; }, rng);
  REQUIRE(out.manifest.entries.size() == 3);
  for (const auto& e : out.manifest.entries) {
    CHECK(e.references.size() == 2);
    CHECK(e.flags.empty());
    const Image restored = read_image(root / "out" / e.path);
    const Image lq = read_image(fx.lq_dir / (e.image_id + ".png"));
    CHECK(test::max_abs_diff(restored, lq) == 0.0);
  }
  const auto reloaded = load_manifest(root / "out" / "manifest.json");
  CHECK(reloaded.missing.empty());
  CHECK(reloaded.entries.size() == 3);
}

TEST_CASE("real-world ingest flags entries when the gate rejects everything") {
  const auto root = test::temp_dir("ingest_reject");
  IngestFixture fx(root);
  Rng rng(6);
  RealWorldOptions opt;
  const auto out = build_real_world_ref_manifest(fx.lq_dir, root / "out", opt, fx.generator, fx.pool, fx.lookup(),
                                                 [](const Image&, const Image&) { return 0.0; }, rng);
  REQUIRE(out.manifest.entries.size() == 3);
  for (const auto& e : out.manifest.entries) {
    CHECK(e.references.empty());
    CHECK(e.flags == std::vector<std::string>{"no_references"});
  }
  CHECK(out.log.size() == 3);
}

TEST_CASE("real-world ingest is deterministic and logs restorer failures") {
  const auto root = test::temp_dir("ingest_det");
  IngestFixture fx(root);
  RealWorldOptions opt;
  opt.references_per_image = 2;
  auto sim = [](const Image& a, const Image& b) { return a.values()[0] > b.values()[0] ? 0.9 : 0.4; };
  Rng r1(7), r2(7);
  const auto a = build_real_world_ref_manifest(fx.lq_dir, root / "a", opt, fx.generator, fx.pool, fx.lookup(), sim, r1);
  const auto b = build_real_world_ref_manifest(fx.lq_dir, root / "b", opt, fx.generator, fx.pool, fx.lookup(), sim, r2);
  CHECK(to_json(a.manifest) == to_json(b.manifest));
  CHECK(a.synthesis == b.synthesis);
  CHECK(read_file(root / "a" / "manifest.json") == read_file(root / "b" / "manifest.json"));

  opt.restorer_command = "false";
  Rng r3(7);
  const auto failed = build_real_world_ref_manifest(fx.lq_dir, root / "c", opt, fx.generator, fx.pool, fx.lookup(), sim, r3);
  CHECK(failed.manifest.entries.empty());
  CHECK(failed.log.size() == 3);

  opt.restorer_command = "cp";
  Rng r4(7);
  const auto copied = build_real_world_ref_manifest(fx.lq_dir, root / "d", opt, fx.generator, fx.pool, fx.lookup(), sim, r4);
  CHECK(to_json(copied.manifest) == to_json(a.manifest));
}

TEST_CASE("procedural corpus") {
  const auto c1 = generate_corpus(3, 2, 32, 11);
  const auto c2 = generate_corpus(3, 2, 32, 11);
  REQUIRE(c1.size() == 6);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].image == c2[i].image);
    CHECK(c1[i].image.height() == 32);
    for (double v : c1[i].image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(c1[0].identity_id == c1[1].identity_id);
  CHECK(c1[0].identity_id != c1[2].identity_id);
  CHECK(test::max_abs_diff(c1[0].image, c1[1].image) > 0.1);
}
