#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "idrestore/backbone.hpp"
#include "test_util.hpp"

using namespace idr;

namespace {

nn::Tensor normal_tensor(std::vector<int> shape, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor(std::move(shape), 1.0, rng);
}

}  // namespace

TEST_CASE("cosine schedule endpoints and monotonicity") {
  const auto s = NoiseSchedule::cosine(1000);
  CHECK(s.total_steps() == 1000);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1000) > 0.0);
  CHECK(s.alpha_bar(1000) < 1e-6);
  for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) <= s.alpha_bar(t - 1));
  CHECK_THROWS_AS(s.alpha_bar(-1), std::invalid_argument);
  CHECK_THROWS_AS(s.alpha_bar(1001), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::cosine(0), std::invalid_argument);
}

TEST_CASE("schedule tables are validated") {
  CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{1.0, 0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{1.0, -0.1}), std::invalid_argument);
  CHECK_NOTHROW(NoiseSchedule(std::vector<double>{1.0, 0.5, 0.5, 0.0}));
}

TEST_CASE("add_noise closed forms") {
  const auto z0 = normal_tensor({3, 4, 4}, 1);
  const auto eps = normal_tensor({3, 4, 4}, 2);
  const NoiseSchedule s(std::vector<double>{1.0, 0.25, 0.0});
  const auto at0 = add_noise(z0, eps, 0, s);
  const auto at1 = add_noise(z0, eps, 1, s);
  const auto at2 = add_noise(z0, eps, 2, s);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    CHECK(at0[i] == doctest::Approx(z0[i]).epsilon(1e-15));
    CHECK(at1[i] == doctest::Approx(0.5 * z0[i] + std::sqrt(0.75) * eps[i]).epsilon(1e-12));
    CHECK(at2[i] == doctest::Approx(eps[i]).epsilon(1e-15));
  }
  CHECK_THROWS_AS(add_noise(z0, normal_tensor({3, 4, 5}, 3), 1, s), std::invalid_argument);
}

TEST_CASE("forward process keeps unit variance for unit-variance inputs") {
  const auto s = NoiseSchedule::cosine(1000);
  const auto z0 = normal_tensor({3, 64, 64}, 4);
  const auto eps = normal_tensor({3, 64, 64}, 5);
  for (int t : {0, 100, 500, 900, 1000}) {
    const auto zt = add_noise(z0, eps, t, s);
    double m = 0, v = 0;
    for (double x : zt.values()) m += x;
    m /= zt.size();
    for (double x : zt.values()) v += (x - m) * (x - m);
    v /= zt.size();
    CHECK(v == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("downscale codec shapes and range") {
  DownscaleCodec codec;
  const Image img = test::random_image(64, 48, 6);
  const auto z = codec.encode(img);
  CHECK(z.shape() == std::vector<int>{3, 16, 12});
  for (double v : z.values()) {
    CHECK(v >= -1.0 - 1e-9);
    CHECK(v <= 1.0 + 1e-9);
  }
  const Image back = codec.decode(z, 64, 48);
  CHECK(back.height() == 64);
  CHECK(back.width() == 48);
  const Image flat(32, 32, 3, 0.25);
  for (double v : codec.encode(flat).values()) CHECK(v == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("predict_noise preserves latent shape") {
  const auto s = NoiseSchedule::cosine(1000);
  ToyDenoiserConfig cfg;
  cfg.token_dim = 8;
  ToyDenoiser den(cfg, s, 7);
  ToyControlBranch ctl(cfg, 8);
  ToyTextEncoder text(8, 9);
  const auto prompt = text.encode(kFixedPrompt, kIdentityWord);
  for (int h : {4, 8, 16})
    for (int w : {4, 12})
      for (int t : {0, 1, 500, 1000}) {
        nn::Var z = nn::constant(normal_tensor({3, h, w}, 10));
        const auto control = ctl.encode(normal_tensor({3, h, w}, 11));
        CHECK(predict_noise(den, z, t, prompt, &control, s).shape() == z.shape());
        CHECK(predict_noise(den, z, t, prompt, nullptr, s).shape() == z.shape());
      }
  nn::Var z = nn::constant(normal_tensor({3, 8, 8}, 12));
  CHECK_THROWS_AS(predict_noise(den, z, -1, prompt, nullptr, s), std::invalid_argument);
  CHECK_THROWS_AS(predict_noise(den, z, 1001, prompt, nullptr, s), std::invalid_argument);
  CHECK_THROWS_AS(predict_noise(den, z, 10, PromptEmbedding{}, nullptr, s), std::invalid_argument);
  auto bad = prompt;
  bad.token_index = bad.length();
  CHECK_THROWS_AS(predict_noise(den, z, 10, bad, nullptr, s), std::invalid_argument);
}

TEST_CASE("denoiser and control gradients match finite differences") {
  const auto s = NoiseSchedule::cosine(1000);
  ToyDenoiserConfig cfg;
  cfg.channels = 6;
  cfg.token_dim = 8;
  cfg.key_dim = 4;
  ToyDenoiser den(cfg, s, 13);
  ToyControlBranch ctl(cfg, 14);
  ToyTextEncoder text(8, 15);
  Rng perturb(16);
  for (auto& p : ctl.parameters().params())
    if (p.name.rfind("zero", 0) == 0)
      for (auto& v : p.var.mutable_value().values()) v = 0.1 * standard_normal(perturb);

  const auto prompt = text.encode(kFixedPrompt, kIdentityWord);
  const auto lq = normal_tensor({3, 6, 6}, 17);
  nn::Var z = nn::constant(normal_tensor({3, 6, 6}, 18));
  nn::Var eps = nn::constant(normal_tensor({3, 6, 6}, 19));
  auto loss = [&] {
    const auto control = ctl.encode(lq);
    return nn::l2_distance(predict_noise(den, z, 400, prompt, &control, s), eps);
  };
  std::vector<nn::Var> params;
  for (auto& p : den.parameters().params()) params.push_back(p.var);
  for (auto& p : ctl.parameters().params()) params.push_back(p.var);
  Rng rng(20);
  const auto r = test::gradient_check(loss, params, 20, rng);
  CHECK(r.checked == 20);
  CHECK(r.failed == 0);
  CHECK(r.worst_relative < 1e-4);
}
