#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>

#include "idrestore/image.hpp"
#include "idrestore/rng.hpp"

namespace idr::test {

inline Image random_image(int h, int w, std::uint64_t seed, int channels = 3) {
  Rng rng(seed);
  Image img(h, w, channels);
  for (double& v : img.values()) v = uniform_real(rng, 0.0, 1.0);
  return img;
}

// Smooth content (sum of a few random sinusoids); closer to natural images
// than white noise.
inline Image smooth_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 3);
  double fx[3], fy[3], ph[3], amp[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = uniform_real(rng, 0.5, 3.0);
    fy[k] = uniform_real(rng, 0.5, 3.0);
    ph[k] = uniform_real(rng, 0.0, 6.28);
    amp[k] = uniform_real(rng, 0.05, 0.15);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.5;
        for (int k = 0; k < 3; ++k)
          v += amp[k] * std::sin(6.283185307 * (fx[k] * x / w + fy[k] * y / h) + ph[k] + c);
        img.at(y, x, c) = v;
      }
  return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("idrestore_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace idr::test
