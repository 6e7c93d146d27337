#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace idr {

// Interleaved HWC image with real-valued samples, nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 3, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  void clamp01();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Rounds every sample to the nearest 8-bit level (values stay in [0, 1]).
Image quantize8(const Image& image);

// Separable bicubic (Keys, a = -0.5) resampler. When shrinking, the kernel is
// stretched by the scale factor so the result is antialiased.
Image resize_bicubic(const Image& image, int out_height, int out_width);

// Copies the rectangle [y, y+h) x [x, x+w); the rectangle must lie inside.
Image crop(const Image& image, int y, int x, int h, int w);

// Rec. 601 luma, single channel.
Image to_luma(const Image& image);

// Places images left to right on a shared canvas (used for comparison grids).
Image hconcat(std::span<const Image> images, double fill = 1.0);

}  // namespace idr
