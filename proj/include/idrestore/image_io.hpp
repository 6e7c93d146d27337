#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "idrestore/image.hpp"

namespace idr {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

// Baseline JPEG with 4:4:4 sampling so that chroma is not decimated.
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
Image decode_jpeg(const std::vector<std::uint8_t>& bytes);
Image read_jpeg(const std::filesystem::path& path);
void write_jpeg(const Image& image, const std::filesystem::path& path, int quality);

// Encode then decode in memory.
Image jpeg_round_trip(const Image& image, int quality);

// Dispatches on extension (.png, .jpg, .jpeg).
Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);
// Sorted list of image files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace idr
