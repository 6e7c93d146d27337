#pragma once

#include "idrestore/image.hpp"

namespace idr {

// Orthonormal 2-D Haar transform, applied per channel. The input is
// mirror-padded up to a multiple of 2^levels; coefficients use the usual
// Mallat layout, so the coarsest approximation band is the top-left
// (H / 2^levels) x (W / 2^levels) block of the padded result.
Image haar_decompose(const Image& image, int levels);
// Inverse of haar_decompose, cropped back to height x width.
Image haar_reconstruct(const Image& coefficients, int levels, int height, int width);

// Swaps the coarsest low-frequency band of `output` for that of `reference`
// and reconstructs, clipped to [0, 1].
Image wavelet_color_correct(const Image& output, const Image& reference, int levels = 5);

}  // namespace idr
