#include <doctest.h>

#include <cmath>

#include "idrestore/degradation.hpp"
#include "idrestore/image_io.hpp"
#include "idrestore/metrics.hpp"
#include "test_util.hpp"

using namespace idr;

TEST_CASE("gaussian kernel sums to one and is 4-fold symmetric") {
  for (double sigma : {0.2, 0.5, 1.0, 2.0, 3.7, 10.0}) {
    for (int size : {1, 3, 7, 13, 31}) {
      const Kernel k = gaussian_kernel(sigma, size);
      double sum = 0.0;
      for (double v : k.values()) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          CHECK(k.at(i, j) == doctest::Approx(k.at(j, i)).epsilon(1e-15));
          CHECK(k.at(i, j) == doctest::Approx(k.at(size - 1 - i, j)).epsilon(1e-15));
          CHECK(k.at(i, j) == doctest::Approx(k.at(i, size - 1 - j)).epsilon(1e-15));
        }
    }
  }
}

TEST_CASE("gaussian kernel approaches the identity as sigma vanishes") {
  CHECK(gaussian_kernel(1e-6, 3).center() >= 1.0 - 1e-6);
}

TEST_CASE("gaussian kernel matches direct evaluation") {
  const double sigma = 2.0;
  const int size = 13;
  double total = 0.0;
  for (int y = -6; y <= 6; ++y)
    for (int x = -6; x <= 6; ++x) total += std::exp(-(x * x + y * y) / (2 * sigma * sigma));
  const Kernel k = gaussian_kernel(sigma, size);
  CHECK(k.center() == doctest::Approx(1.0 / total).epsilon(1e-12));
  CHECK(k.at(0, 12) == doctest::Approx(std::exp(-72.0 / 8.0) / total).epsilon(1e-12));
}

TEST_CASE("gaussian kernel rejects bad arguments") {
  CHECK_THROWS_AS(gaussian_kernel(0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(-1.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(1.0, 0), std::invalid_argument);
}

TEST_CASE("kernel size rule") {
  CHECK(kernel_size_for(1.0, 512) == 7);
  CHECK(kernel_size_for(0.2, 512) == 3);
  CHECK(kernel_size_for(10.0, 512) == 61);
  CHECK(kernel_size_for(10.0, 32) == 31);
  CHECK(kernel_size_for(10.0, 33) == 33);
}

TEST_CASE("separable blur equals 2-D convolution with the kernel") {
  const Image img = test::random_image(17, 13, 5);
  const double sigma = 1.3;
  const int size = 9;
  const Kernel k = gaussian_kernel(sigma, size);
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  const Image fast = gaussian_blur(img, sigma, size);
  double worst = 0.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = 0; i < size; ++i)
          for (int j = 0; j < size; ++j)
            acc += k.at(i, j) * img.at(reflect(y + i - 4, 17), reflect(x + j - 4, 13), c);
        worst = std::max(worst, std::abs(acc - fast.at(y, x, c)));
      }
  CHECK(worst < 1e-12);
}

TEST_CASE("sampled parameters stay inside the default ranges") {
  const DegradationRanges ranges;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const DegradationParams p = sample_degradation_params(ranges, rng);
    CHECK(p.sigma >= 0.2);
    CHECK(p.sigma <= 10.0);
    CHECK(p.scale >= 1);
    CHECK(p.scale <= 16);
    CHECK(p.noise >= 0.0);
    CHECK(p.noise <= 15.0);
    CHECK(p.quality >= 30);
    CHECK(p.quality <= 100);
  }
}

TEST_CASE("point ranges give exact parameters; sampling is deterministic") {
  DegradationRanges point{{1, 1}, {1, 1}, {0, 0}, {100, 100}};
  Rng rng(9);
  CHECK(sample_degradation_params(point, rng) == DegradationParams{1.0, 1, 0.0, 100});

  Rng a(42), b(42);
  CHECK(sample_degradation_params(DegradationRanges{}, a) == sample_degradation_params(DegradationRanges{}, b));
}

TEST_CASE("scale is uniform over 1..16") {
  Rng rng(2024);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) sum += sample_degradation_params(DegradationRanges{}, rng).scale;
  CHECK(std::abs(sum / 1000.0 - 8.5) <= 0.5);
}

TEST_CASE("invalid ranges are rejected") {
  DegradationRanges r;
  r.sigma = {2.0, 1.0};
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = {};
  r.quality = {30, 101};
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = {};
  r.scale = {1.2, 1.8};
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("identity settings reduce to a q=100 JPEG round trip") {
  const DegradationParams id{1e-6, 1, 0.0, 100};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image hq = test::smooth_image(64, 64, seed);
    const Image lq = apply_degradation(hq, id, seed);
    const Image oracle = jpeg_round_trip(hq, 100);
    CHECK(test::max_abs_diff(lq, oracle) < 1e-12);
    CHECK(psnr(lq, hq) >= 45.0);
  }
}

TEST_CASE("constant gray survives blur and compression") {
  const Image gray(48, 48, 3, 0.5);
  for (double sigma : {0.2, 1.0, 4.0, 10.0}) {
    const Image lq = apply_degradation(gray, DegradationParams{sigma, 1, 0.0, 75}, 1);
    CHECK(test::max_abs_diff(lq, gray) <= 2.0 / 255.0 + 1e-12);
  }
}

TEST_CASE("output dimensions equal input dimensions") {
  CHECK(intermediate_side(512, 16) == 32);
  const Image big(512, 512, 3, 0.3);
  const Image out = apply_degradation(big, DegradationParams{0.5, 16, 0.0, 90}, 3);
  CHECK(out.height() == 512);
  CHECK(out.width() == 512);

  const Image odd = test::random_image(50, 37, 1);
  for (int r : {1, 2, 3, 7, 16, 37}) {
    const Image o = apply_degradation(odd, DegradationParams{1.0, r, 3.0, 60}, 5);
    CHECK(o.same_shape(odd));
  }
  CHECK_THROWS_AS(apply_degradation(odd, DegradationParams{1.0, 38, 0.0, 60}, 5), std::invalid_argument);
}

TEST_CASE("lower JPEG quality degrades more on average") {
  double low = 0.0, high = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Image hq = test::random_image(32, 32, 1000 + i);
    low += psnr(apply_degradation(hq, DegradationParams{1e-6, 1, 0.0, 30}, i), hq);
    high += psnr(apply_degradation(hq, DegradationParams{1e-6, 1, 0.0, 100}, i), hq);
  }
  CHECK(low / n < high / n);
}

TEST_CASE("training pairs are reproducible and keep the HQ image") {
  const Image hq = test::smooth_image(64, 64, 8);
  Rng a(77), b(77);
  const TrainingPair p1 = make_training_pair(hq, DegradationRanges{}, a);
  const TrainingPair p2 = make_training_pair(hq, DegradationRanges{}, b);
  CHECK(p1.lq == p2.lq);
  CHECK(p1.params == p2.params);
  CHECK(p1.hq == hq);

  DegradationRanges point{{1e-6, 1e-6}, {1, 1}, {0, 0}, {100, 100}};
  Rng c(1);
  CHECK(psnr(make_training_pair(hq, point, c).lq, hq) >= 45.0);
}

TEST_CASE("PNG and JPEG files round trip") {
  const auto dir = test::temp_dir("io");
  const Image img = quantize8(test::random_image(20, 30, 4));
  write_png(img, dir / "a.png");
  CHECK(read_image(dir / "a.png") == img);
  write_jpeg(img, dir / "a.jpg", 100);
  const Image j = read_image(dir / "a.jpg");
  CHECK(j.same_shape(img));
  CHECK(psnr(j, img) > 30.0);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), IoError);
}
