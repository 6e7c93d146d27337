#include "idrestore/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace idr {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: dimension mismatch");
  if (a.empty()) throw std::invalid_argument("psnr: empty image");
  const auto av = a.values(), bv = b.values();
  double mse = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) mse += (av[i] - bv[i]) * (av[i] - bv[i]);
  mse /= static_cast<double>(av.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, const SsimOptions& options) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: dimension mismatch");
  const int win = options.window;
  if (win < 1 || win % 2 == 0) throw std::invalid_argument("ssim: window must be odd and positive");
  if (a.height() < win || a.width() < win) throw std::invalid_argument("ssim: image smaller than window");

  const Image la = a.channels() == 1 ? a : to_luma(a);
  const Image lb = b.channels() == 1 ? b : to_luma(b);

  std::vector<double> g(win);
  double sum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - win / 2;
    g[i] = std::exp(-d * d / (2.0 * options.sigma * options.sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;

  const double c1 = options.k1 * options.k1, c2 = options.k2 * options.k2;
  const int oh = la.height() - win + 1, ow = la.width() - win + 1;
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double w = g[i] * g[j];
          const double pa = la.at(y + i, x + j, 0), pb = lb.at(y + i, x + j, 0);
          ma += w * pa;
          mb += w * pb;
          saa += w * pa * pa;
          sbb += w * pb * pb;
          sab += w * pa * pb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

double lmd(const LandmarkSet& a, const LandmarkSet& b) {
  if (a.size() != b.size()) throw std::invalid_argument("lmd: landmark count mismatch");
  if (a.empty()) throw std::invalid_argument("lmd: empty landmark set");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::hypot(a[i].x - b[i].x, a[i].y - b[i].y);
  return total / static_cast<double>(a.size());
}

double ids(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("ids: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("ids: zero-norm embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

nlohmann::json run_external_metric(const ExternalMetric& metric, const std::filesystem::path& pair_manifest) {
  const std::string cmd = metric.command + " '" + pair_manifest.string() + "'";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("external metric '" + metric.name + "': cannot start command");
  std::string output;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe.get())) output.append(buf.data(), n);
  const int status = pclose(pipe.release());
  if (status != 0) throw std::runtime_error("external metric '" + metric.name + "' exited with status " + std::to_string(status));
  nlohmann::json j = nlohmann::json::parse(output);
  if (!j.is_object() || !j.contains("value") || !j["value"].is_number()) {
    throw std::runtime_error("external metric '" + metric.name + "' did not print {\"value\": number}");
  }
  return j;
}

}  // namespace idr
