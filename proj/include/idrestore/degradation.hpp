#pragma once

#include <utility>
#include <vector>

#include "idrestore/image.hpp"
#include "idrestore/rng.hpp"

namespace idr {

// One realization of the blur -> downsample -> noise -> JPEG -> upsample chain.
struct DegradationParams {
  double sigma = 1.0;  // blur kernel width, pixels
  int scale = 1;       // down/up-sampling factor
  double noise = 0.0;  // Gaussian noise std, 8-bit units
  int quality = 100;   // JPEG quality factor

  friend bool operator==(const DegradationParams&, const DegradationParams&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct DegradationRanges {
  Interval sigma{0.2, 10.0};
  Interval scale{1.0, 16.0};
  Interval noise{0.0, 15.0};
  Interval quality{30.0, 100.0};

  // Throws std::invalid_argument when an interval is empty or out of domain.
  void validate() const;
};

// Row-major size x size Gaussian, normalized to unit sum.
class Kernel {
 public:
  Kernel(int size, std::vector<double> values) : size_(size), values_(std::move(values)) {}
  int size() const { return size_; }
  double at(int row, int col) const { return values_[static_cast<std::size_t>(row) * size_ + col]; }
  double center() const { return at(size_ / 2, size_ / 2); }
  const std::vector<double>& values() const { return values_; }

 private:
  int size_;
  std::vector<double> values_;
};

Kernel gaussian_kernel(double sigma, int size);

// 2 * ceil(3 sigma) + 1, clamped to the largest odd size not exceeding `max_side`.
int kernel_size_for(double sigma, int max_side);

// Separable Gaussian blur with mirrored borders; equivalent to convolving
// with gaussian_kernel(sigma, size).
Image gaussian_blur(const Image& image, double sigma, int size);

DegradationParams sample_degradation_params(const DegradationRanges& ranges, Rng& rng);

// Resolution between the down- and up-sampling steps; sides that do not
// divide evenly round down.
inline int intermediate_side(int side, int scale) { return side / scale; }

Image apply_degradation(const Image& hq, const DegradationParams& params, Rng& noise_rng);

// Uses a noise stream derived from `seed`, so the result is a pure function of
// (hq, params, seed).
Image apply_degradation(const Image& hq, const DegradationParams& params, std::uint64_t seed);

struct TrainingPair {
  Image lq;
  Image hq;
  DegradationParams params;
};

TrainingPair make_training_pair(const Image& hq, const DegradationRanges& ranges, Rng& rng);

}  // namespace idr
