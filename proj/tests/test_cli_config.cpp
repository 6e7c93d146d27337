#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "idrestore/cli.hpp"
#include "idrestore/config.hpp"
#include "idrestore/image_io.hpp"
#include "idrestore/metrics.hpp"
#include "test_util.hpp"

using namespace idr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(invoke({}).code == cli::kExitUsage);
  const auto r = invoke({"degrade", "--no-such-flag"});
  CHECK(r.code == cli::kExitUsage);
  CHECK_FALSE(r.err.empty());
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  CHECK(invoke({"train", "--stage", "2", "--manifest", "m.json", "--out", "x"}).code == cli::kExitUsage);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_NOTHROW(parse_config(json::object()));
  CHECK_THROWS_AS(parse_config(json{{"sampler", {{"lamda", 2.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"sampler", {{"steps", "many"}}}}), ConfigError);
  try {
    parse_config(json{{"training", {{"nope", 1}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("training.nope") != std::string::npos);
  }
  CHECK_THROWS(parse_config(json{{"sampler", {{"steps", 0}}}}));
}

TEST_CASE("config round trips through json") {
  const AppConfig a = parse_config(json{{"seed", 42},
                                        {"sampler", {{"lambda_cfg", 1.5}, {"steps", 20}}},
                                        {"training", {{"dropout_prob", 0.3}}}});
  CHECK(a.seed == 42);
  CHECK(a.training.seed == 42);
  CHECK(a.sampler.seed == 42);
  CHECK(a.sampler.lambda_cfg == 1.5);
  const json j = to_json(a);
  CHECK(to_json(parse_config(j)) == j);
}

TEST_CASE("evaluate on identical pairs and stamp round trip") {
  const auto dir = test::temp_dir("cli_eval");
  for (int i = 0; i < 2; ++i) {
    const Image img = test::smooth_image(32, 32, 10 + i);
    write_png(img, dir / ("a" + std::to_string(i) + ".png"));
    write_png(img, dir / ("b" + std::to_string(i) + ".png"));
  }
  json pairs{{"pairs", json::array({json{{"id", "p0"}, {"restored", "a0.png"}, {"reference", "b0.png"}},
                                    json{{"id", "p1"}, {"restored", "a1.png"}, {"reference", "b1.png"}}})}};
  std::ofstream(dir / "pairs.json") << pairs.dump();
  const auto r = invoke({"--seed", "9", "evaluate", "--pairs", (dir / "pairs.json").string(), "--out",
                      (dir / "report.json").string()});
  REQUIRE(r.code == cli::kExitOk);
  const json report = read_json(dir / "report.json");
  CHECK(report["mean"]["PSNR"].get<double>() == kPsnrCap);
  CHECK(report["mean"]["SSIM"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report["mean"]["IDS"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report["mean"]["LMD"].is_null());
  CHECK(report["pairs"].size() == 2);

  const json stamp = read_json(dir / "stamp.json");
  CHECK(stamp["command"] == "evaluate");
  CHECK(stamp["seed"] == 9);
  CHECK(to_json(parse_config(stamp["config"])) == stamp["config"]);
}

TEST_CASE("degrade at identity settings stays within the JPEG tolerance") {
  const auto dir = test::temp_dir("cli_degrade");
  fs::create_directories(dir / "in");
  const Image img = test::smooth_image(48, 48, 3);
  write_png(img, dir / "in" / "x.png");
  const auto r = invoke({"degrade", "--in", (dir / "in").string(), "--out", (dir / "out").string(), "--sigma",
                      "1e-6,1e-6", "--scale", "1,1", "--noise", "0,0", "--quality", "100,100"});
  REQUIRE(r.code == cli::kExitOk);
  const Image lq = read_image(dir / "out" / "x.png");
  CHECK(psnr(lq, read_image(dir / "in" / "x.png")) >= 45.0);
  CHECK(fs::exists(dir / "out" / "stamp.json"));
  CHECK(fs::exists(dir / "out" / "degradation.json"));
}

TEST_CASE("runtime failures exit with code 1 and a structured error") {
  const auto dir = test::temp_dir("cli_fail");
  std::ofstream(dir / "pairs.json") << R"({"pairs": [{"restored": "missing.png", "reference": "missing.png"}]})";
  CHECK(invoke({"evaluate", "--pairs", (dir / "nope.json").string(), "--out", (dir / "r.json").string()}).code ==
        cli::kExitUsage);
  const auto r = invoke({"evaluate", "--pairs", (dir / "pairs.json").string(), "--out", (dir / "r.json").string()});
  CHECK(r.code == cli::kExitFailure);
  const json e = json::parse(r.err);
  CHECK(e["command"] == "evaluate");
  CHECK(e.contains("error"));
}
