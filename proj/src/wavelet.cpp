#include "idrestore/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace idr {

namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

int padded(int side, int levels) {
  const int block = 1 << levels;
  return (side + block - 1) / block * block;
}

void check_levels(int levels) {
  if (levels < 0 || levels > 16) throw std::invalid_argument("wavelet: levels must be in [0, 16]");
}

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

// One analysis step on the top-left h x w block of one channel.
void forward_level(Image& img, int c, int h, int w) {
  std::vector<double> tmp(std::max(h, w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w / 2; ++x) {
      const double a = img.at(y, 2 * x, c), b = img.at(y, 2 * x + 1, c);
      tmp[x] = (a + b) * kInvSqrt2;
      tmp[w / 2 + x] = (a - b) * kInvSqrt2;
    }
    for (int x = 0; x < w; ++x) img.at(y, x, c) = tmp[x];
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h / 2; ++y) {
      const double a = img.at(2 * y, x, c), b = img.at(2 * y + 1, x, c);
      tmp[y] = (a + b) * kInvSqrt2;
      tmp[h / 2 + y] = (a - b) * kInvSqrt2;
    }
    for (int y = 0; y < h; ++y) img.at(y, x, c) = tmp[y];
  }
}

void inverse_level(Image& img, int c, int h, int w) {
  std::vector<double> tmp(std::max(h, w));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h / 2; ++y) {
      const double s = img.at(y, x, c), d = img.at(h / 2 + y, x, c);
      tmp[2 * y] = (s + d) * kInvSqrt2;
      tmp[2 * y + 1] = (s - d) * kInvSqrt2;
    }
    for (int y = 0; y < h; ++y) img.at(y, x, c) = tmp[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w / 2; ++x) {
      const double s = img.at(y, x, c), d = img.at(y, w / 2 + x, c);
      tmp[2 * x] = (s + d) * kInvSqrt2;
      tmp[2 * x + 1] = (s - d) * kInvSqrt2;
    }
    for (int x = 0; x < w; ++x) img.at(y, x, c) = tmp[x];
  }
}

}  // namespace

Image haar_decompose(const Image& image, int levels) {
  check_levels(levels);
  if (image.empty()) throw std::invalid_argument("wavelet: empty image");
  const int H = padded(image.height(), levels), W = padded(image.width(), levels);
  Image out(H, W, image.channels());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < image.channels(); ++c)
        out.at(y, x, c) = image.at(mirror(y, image.height()), mirror(x, image.width()), c);
  for (int c = 0; c < out.channels(); ++c) {
    int h = H, w = W;
    for (int l = 0; l < levels; ++l, h /= 2, w /= 2) forward_level(out, c, h, w);
  }
  return out;
}

Image haar_reconstruct(const Image& coefficients, int levels, int height, int width) {
  check_levels(levels);
  const int H = coefficients.height(), W = coefficients.width();
  if (H % (1 << levels) != 0 || W % (1 << levels) != 0 || height > H || width > W) {
    throw std::invalid_argument("wavelet: coefficient layout does not match the requested size");
  }
  Image work = coefficients;
  for (int c = 0; c < work.channels(); ++c) {
    for (int l = levels - 1; l >= 0; --l) inverse_level(work, c, H >> l, W >> l);
  }
  return crop(work, 0, 0, height, width);
}

Image wavelet_color_correct(const Image& output, const Image& reference, int levels) {
  if (!output.same_shape(reference)) throw std::invalid_argument("wavelet_color_correct: dimension mismatch");
  Image a = haar_decompose(output, levels);
  const Image b = haar_decompose(reference, levels);
  const int h = a.height() >> levels, w = a.width() >> levels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < a.channels(); ++c) a.at(y, x, c) = b.at(y, x, c);
  Image result = haar_reconstruct(a, levels, output.height(), output.width());
  result.clamp01();
  return result;
}

}  // namespace idr
