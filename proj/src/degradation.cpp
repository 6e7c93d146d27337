#include "idrestore/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "idrestore/image_io.hpp"

namespace idr {

void DegradationRanges::validate() const {
  auto check = [](const Interval& iv, double lo, double hi, const char* name) {
    if (!(iv.lo <= iv.hi) || iv.lo < lo || iv.hi > hi) {
      throw std::invalid_argument(std::string("invalid degradation range for ") + name);
    }
  };
  check(sigma, 1e-12, 1e6, "sigma");
  check(scale, 1.0, 1e6, "scale");
  check(noise, 0.0, 1e6, "noise");
  check(quality, 1.0, 100.0, "quality");
  if (std::ceil(scale.lo) > std::floor(scale.hi) || std::ceil(quality.lo) > std::floor(quality.hi)) {
    throw std::invalid_argument("integer degradation range contains no integer");
  }
}

Kernel gaussian_kernel(double sigma, int size) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd and >= 1");
  const int half = size / 2;
  std::vector<double> values(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dy = i - half;
      const double dx = j - half;
      double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      values[static_cast<std::size_t>(i) * size + j] = v;
      total += v;
    }
  }
  for (double& v : values) v /= total;
  return Kernel(size, std::move(values));
}

int kernel_size_for(double sigma, int max_side) {
  int size = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  int cap = max_side % 2 == 1 ? max_side : max_side - 1;
  return std::max(1, std::min(size, cap));
}

namespace {

std::vector<double> gaussian_taps(double sigma, int size) {
  const int half = size / 2;
  std::vector<double> taps(size);
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma, int size) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_blur: size must be odd");
  // The 2D Gaussian factors into the outer product of two 1D Gaussians, and the
  // normalizations factor the same way.
  const auto taps = gaussian_taps(sigma, size);
  const int half = size / 2;
  const int h = image.height();
  const int w = image.width();
  const int ch = image.channels();

  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < size; ++k) acc += taps[k] * image.at(y, mirror(x + k - half, w), c);
        tmp.at(y, x, c) = acc;
      }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < size; ++k) acc += taps[k] * tmp.at(mirror(y + k - half, h), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

DegradationParams sample_degradation_params(const DegradationRanges& ranges, Rng& rng) {
  ranges.validate();
  DegradationParams p;
  p.sigma = uniform_real(rng, ranges.sigma.lo, ranges.sigma.hi);
  p.scale = uniform_int(rng, static_cast<int>(std::ceil(ranges.scale.lo)),
                        static_cast<int>(std::floor(ranges.scale.hi)));
  p.noise = uniform_real(rng, ranges.noise.lo, ranges.noise.hi);
  p.quality = uniform_int(rng, static_cast<int>(std::ceil(ranges.quality.lo)),
                          static_cast<int>(std::floor(ranges.quality.hi)));
  return p;
}

Image apply_degradation(const Image& hq, const DegradationParams& params, Rng& noise_rng) {
  if (hq.empty()) throw std::invalid_argument("apply_degradation: empty image");
  if (params.scale < 1) throw std::invalid_argument("apply_degradation: scale must be >= 1");
  if (params.scale > std::min(hq.height(), hq.width())) {
    throw std::invalid_argument("apply_degradation: scale larger than image side");
  }
  if (params.quality < 1 || params.quality > 100) {
    throw std::invalid_argument("apply_degradation: quality must be in [1, 100]");
  }
  if (params.noise < 0.0) throw std::invalid_argument("apply_degradation: noise must be >= 0");

  const int size = kernel_size_for(params.sigma, std::min(hq.height(), hq.width()));
  Image x = gaussian_blur(hq, params.sigma, size);

  const int low_h = intermediate_side(hq.height(), params.scale);
  const int low_w = intermediate_side(hq.width(), params.scale);
  x = resize_bicubic(x, low_h, low_w);

  if (params.noise > 0.0) {
    const double stddev = params.noise / 255.0;
    for (double& v : x.values()) v += stddev * standard_normal(noise_rng);
  }
  x.clamp01();

  x = jpeg_round_trip(x, params.quality);

  x = resize_bicubic(x, hq.height(), hq.width());
  x.clamp01();
  return x;
}

Image apply_degradation(const Image& hq, const DegradationParams& params, std::uint64_t seed) {
  Rng rng(seed);
  return apply_degradation(hq, params, rng);
}

TrainingPair make_training_pair(const Image& hq, const DegradationRanges& ranges, Rng& rng) {
  TrainingPair pair;
  pair.params = sample_degradation_params(ranges, rng);
  pair.lq = apply_degradation(hq, pair.params, rng);
  pair.hq = hq;
  return pair;
}

}  // namespace idr
