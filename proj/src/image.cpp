#include "idrestore/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace idr {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels <= 0) {
    throw std::invalid_argument("Image: invalid dimensions");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void Image::clamp01() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Tap {
  int first = 0;
  std::vector<double> weights;
};

std::vector<Tap> make_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double stretch = std::max(scale, 1.0);
  const double support = 2.0 * stretch;
  std::vector<Tap> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::ceil(center + support)) - 1;
    Tap& tap = taps[o];
    tap.first = lo;
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      double w = cubic((i - center) / stretch);
      tap.weights.push_back(w);
      total += w;
    }
    for (double& w : tap.weights) w /= total;
  }
  return taps;
}

}  // namespace

Image resize_bicubic(const Image& image, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) {
    throw std::invalid_argument("resize_bicubic: target size must be positive");
  }
  if (image.empty()) throw std::invalid_argument("resize_bicubic: empty image");
  if (out_height == image.height() && out_width == image.width()) return image;

  const int ch = image.channels();
  const auto xtaps = make_taps(image.width(), out_width);
  const auto ytaps = make_taps(image.height(), out_height);

  Image horizontal(image.height(), out_width, ch);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Tap& tap = xtaps[x];
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          int sx = std::clamp(tap.first + static_cast<int>(k), 0, image.width() - 1);
          acc += tap.weights[k] * image.at(y, sx, c);
        }
        horizontal.at(y, x, c) = acc;
      }
    }
  }

  Image out(out_height, out_width, ch);
  for (int y = 0; y < out_height; ++y) {
    const Tap& tap = ytaps[y];
    for (int x = 0; x < out_width; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          int sy = std::clamp(tap.first + static_cast<int>(k), 0, image.height() - 1);
          acc += tap.weights[k] * horizontal.at(sy, x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

Image crop(const Image& image, int y, int x, int h, int w) {
  if (y < 0 || x < 0 || h <= 0 || w <= 0 || y + h > image.height() ||
      x + w > image.width()) {
    throw std::invalid_argument("crop: rectangle outside image");
  }
  Image out(h, w, image.channels());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < image.channels(); ++k) out.at(r, c, k) = image.at(y + r, x + c, k);
  return out;
}

Image to_luma(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      out.at(y, x, 0) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                        0.114 * image.at(y, x, 2);
    }
  }
  return out;
}

Image hconcat(std::span<const Image> images, double fill) {
  int height = 0;
  int width = 0;
  int channels = 3;
  for (const Image& im : images) {
    height = std::max(height, im.height());
    width += im.width();
    channels = im.channels();
  }
  Image out(height, width, channels, fill);
  int offset = 0;
  for (const Image& im : images) {
    for (int y = 0; y < im.height(); ++y)
      for (int x = 0; x < im.width(); ++x)
        for (int c = 0; c < channels; ++c) out.at(y, offset + x, c) = im.at(y, x, c);
    offset += im.width();
  }
  return out;
}

}  // namespace idr
