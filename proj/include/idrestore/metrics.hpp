#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idrestore/image.hpp"

namespace idr {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) on [0, 1] samples; identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM on Rec. 601 luma over the valid (unpadded) window positions.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

struct Point {
  double x = 0.0;
  double y = 0.0;
};
using LandmarkSet = std::vector<Point>;

// Mean Euclidean distance between corresponding landmarks.
double lmd(const LandmarkSet& a, const LandmarkSet& b);

// Cosine similarity.
double ids(std::span<const double> a, std::span<const double> b);

// A learned metric computed by an outside program. The command receives the
// path of a JSON pair manifest as its last argument and must print a JSON
// object with a numeric "value" (and optionally "per_pair").
struct ExternalMetric {
  std::string name;
  std::string command;
};

nlohmann::json run_external_metric(const ExternalMetric& metric, const std::filesystem::path& pair_manifest);

}  // namespace idr
