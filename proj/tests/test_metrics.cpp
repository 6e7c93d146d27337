#include <doctest.h>

#include <cmath>
#include <fstream>

#include "idrestore/metrics.hpp"
#include "test_util.hpp"

using namespace idr;

namespace {

Image quantized(int h, int w, std::uint64_t seed) {
  Image img = test::random_image(h, w, seed);
  for (double& v : img.values()) v = std::round(v * 254.0) / 255.0;
  return img;
}

double direct_psnr(const Image& a, const Image& b) {
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  return 10.0 * std::log10(1.0 / (se / a.size()));
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image a = test::random_image(16, 16, 1);
  CHECK(psnr(a, a) == kPsnrCap);

  const Image q = quantized(16, 20, 2);
  Image q1 = q;
  for (double& v : q1.values()) v += 1.0 / 255.0;
  CHECK(psnr(q, q1) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-6));
  CHECK(psnr(q, q1) == doctest::Approx(48.1308).epsilon(1e-5));

  CHECK(psnr(Image(8, 8, 3, 0.0), Image(8, 8, 3, 1.0)) == doctest::Approx(0.0).epsilon(1e-12));

  const Image b = test::random_image(16, 16, 3);
  CHECK(psnr(a, b) == doctest::Approx(direct_psnr(a, b)).epsilon(1e-12));
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(psnr(a, b) >= 0.0);
  CHECK_THROWS_AS(psnr(a, test::random_image(16, 15, 4)), std::invalid_argument);
}

TEST_CASE("ssim identity and anti-correlation") {
  const Image a = test::random_image(32, 32, 5);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  double total = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const Image x = test::random_image(32, 32, 100 + seed);
    Image y = x;
    for (double& v : y.values()) v = 1.0 - v;
    total += ssim(x, y);
  }
  CHECK(total / 20 < 0.1);
}

TEST_CASE("ssim on constant images matches the zero-variance closed form") {
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  for (auto [c1, c2] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}, std::pair{0.9, 0.3}}) {
    const double expect = (2 * c1 * c2 + C1) * C2 / ((c1 * c1 + c2 * c2 + C1) * C2);
    CHECK(ssim(Image(20, 20, 3, c1), Image(20, 20, 3, c2)) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("ssim properties and errors") {
  for (int seed = 0; seed < 10; ++seed) {
    const Image a = test::random_image(24, 24, 200 + seed);
    const Image b = test::smooth_image(24, 24, 300 + seed);
    const double s = ssim(a, b);
    CHECK(s == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ssim(test::random_image(8, 8, 1), test::random_image(8, 8, 2)), std::invalid_argument);
  CHECK_THROWS_AS(ssim(test::random_image(16, 16, 1), test::random_image(16, 17, 2)), std::invalid_argument);
}

TEST_CASE("landmark distance") {
  const LandmarkSet a{{1, 2}, {5, 7}, {10, -3}};
  LandmarkSet b = a;
  CHECK(lmd(a, b) == 0.0);
  for (auto& p : b) {
    p.x += 3;
    p.y += 4;
  }
  CHECK(lmd(a, b) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(lmd(b, a) == lmd(a, b));
  CHECK(lmd({{0, 0}}, {{1, 0}}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lmd({{0, 0}, {0, 0}}, {{3, 4}, {0, 1}}) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(lmd(a, {{0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(lmd({}, {}), std::invalid_argument);
}

TEST_CASE("identity similarity") {
  const std::vector<double> a{1, 2, 2}, b{2, 1, 2};
  CHECK(ids(a, b) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(ids(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ids(std::vector<double>{1, 0}, std::vector<double>{0, 3}) == 0.0);
  CHECK(ids(b, a) == ids(a, b));
  const std::vector<double> scaled{7, 14, 14};
  CHECK(ids(scaled, b) == doctest::Approx(ids(a, b)).epsilon(1e-12));
  CHECK(ids(a, std::vector<double>{-1, -2, -2}) == doctest::Approx(-1.0).epsilon(1e-12));
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(16), y(16);
    for (auto& v : x) v = standard_normal(rng);
    for (auto& v : y) v = standard_normal(rng);
    const double s = ids(x, y);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ids(a, std::vector<double>{0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(ids(a, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("external metric hook") {
  const auto dir = test::temp_dir("external_metric");
  const auto manifest = dir / "pairs.json";
  std::ofstream(manifest) << R"({"pairs": []})";
  const auto script = dir / "metric.sh";
  std::ofstream(script) << "#!/bin/sh\ntest -f \"$1\" && echo '{\"value\": 0.25}'\n";
  const auto v = run_external_metric({"lpips", "sh " + script.string()}, manifest);
  CHECK(v.at("value").get<double>() == 0.25);
  const auto bad = dir / "bad.sh";
  std::ofstream(bad) << "#!/bin/sh\necho not-json\n";
  CHECK_THROWS(run_external_metric({"bad", "sh " + bad.string()}, manifest));
  const auto fails = dir / "fails.sh";
  std::ofstream(fails) << "#!/bin/sh\nexit 3\n";
  CHECK_THROWS(run_external_metric({"fails", "sh " + fails.string()}, manifest));
}
