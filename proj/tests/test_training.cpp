#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "idrestore/inference.hpp"
#include "idrestore/training.hpp"
#include "test_util.hpp"

using namespace idr;

namespace {

// Recovers the injected noise exactly from z_t and the known clean latent,
// then adds a constant offset.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(const NoiseSchedule& s, nn::Tensor z0, double offset) : s_(s), z0_(std::move(z0)), offset_(offset) {}
  nn::Var forward(const nn::Var& z_t, int t, const PromptEmbedding&, const ControlSignal*) const override {
    const double ab = s_.alpha_bar(t);
    nn::Tensor eps(z_t.shape());
    for (std::size_t i = 0; i < eps.size(); ++i)
      eps[i] = (z_t.value()[i] - std::sqrt(ab) * z0_[i]) / std::sqrt(1.0 - ab) + offset_;
    return nn::constant(std::move(eps));
  }
  ParameterGroup& parameters() override { return params_; }

 private:
  NoiseSchedule s_;
  nn::Tensor z0_;
  double offset_;
  ParameterGroup params_{"denoiser"};
};

TrainingConfig fixed_config(TrainingStage stage) {
  TrainingConfig c;
  c.stage = stage;
  c.batch_size = 1;
  c.resample_degradation = false;
  c.optimizer.learning_rate = 2e-3;
  c.seed = 5;
  return c;
}

double group_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(ss);
}

}  // namespace

TEST_CASE("stage parsing and trainable sets") {
  CHECK(parse_stage("1") == TrainingStage::stage1);
  CHECK(parse_stage("stage2") == TrainingStage::stage2);
  CHECK(parse_stage("one") == TrainingStage::one_stage);
  CHECK_THROWS(parse_stage("3"));
  CHECK(trainable_groups(TrainingStage::stage2) == std::vector<std::string>{kControlGroup});
  const auto s1 = trainable_groups(TrainingStage::stage1);
  CHECK(std::find(s1.begin(), s1.end(), kIdEncoderGroup) != s1.end());
  CHECK(std::find(s1.begin(), s1.end(), kControlGroup) != s1.end());
  CHECK(trainable_groups(TrainingStage::one_stage) == s1);
}

TEST_CASE("prompt dropout frequency") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(draw_prompt_dropout(0.0, rng));
    CHECK(draw_prompt_dropout(1.0, rng));
  }
  int dropped = 0;
  for (int i = 0; i < 10000; ++i) dropped += draw_prompt_dropout(0.5, rng);
  CHECK(std::abs(dropped / 10000.0 - 0.5) <= 0.015);

  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 1, 2, 3);
  const auto c_id = model.identity_prompt(items[0].references);
  const auto& c_text = model.text_prompt();
  CHECK(prompt_dropout(c_id, c_text, 1.0, rng).tokens.node() == c_text.tokens.node());
  CHECK(prompt_dropout(c_id, c_text, 0.0, rng).tokens.node() == c_id.tokens.node());
}

TEST_CASE("config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.dropout_prob = 1.5;
  CHECK_THROWS(c.validate());
  c = {};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.iterations = -1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("loss equals the norm of the prediction error") {
  RestorationModel model(test::small_model_config());
  auto items = test::make_items(model, 1, 2, 4);
  items.resize(1);
  const auto n = static_cast<double>(items[0].hq_latent.size());
  for (double offset : {0.0, 0.3}) {
    model.set_denoiser(std::make_unique<OracleDenoiser>(model.schedule(), items[0].hq_latent, offset));
    auto config = fixed_config(TrainingStage::stage1);
    apply_trainable_set(model, config.stage);
    AdamW opt(config.optimizer);
    Rng rng(6);
    for (int k = 0; k < 5; ++k) {
      const Batch batch = assemble_batch(items, config, model, rng);
      CHECK(training_step(batch, model, opt, config, rng) == doctest::Approx(offset * std::sqrt(n)).epsilon(1e-6));
    }
  }
}

TEST_CASE("batches draw between one and max references without replacement") {
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 2, 4, 7);
  auto config = fixed_config(TrainingStage::stage1);
  config.batch_size = 8;
  config.max_references = 2;
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    for (const auto& s : assemble_batch(items, config, model, rng).samples) {
      CHECK(s.reference_indices.size() >= 1);
      CHECK(s.reference_indices.size() <= 2);
      std::vector<int> sorted = s.reference_indices;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
      for (int i : sorted) CHECK(i < static_cast<int>(s.item->references.size()));
    }
  }
}

TEST_CASE("stage 2 moves only the control branch") {
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 2, 2, 9);
  auto config = fixed_config(TrainingStage::stage2);
  config.iterations = 3;
  const auto id_before = model.group(kIdEncoderGroup).snapshot();
  const auto den_before = model.group(kDenoiserGroup).snapshot();
  const auto ctl_before = model.group(kControlGroup).snapshot();
  const auto report = run_training(config, items, model);
  CHECK(model.group(kIdEncoderGroup).snapshot() == id_before);
  CHECK(model.group(kDenoiserGroup).snapshot() == den_before);
  CHECK(model.group(kControlGroup).snapshot() != ctl_before);
  for (const auto& a : report.audit) {
    if (a.group == kControlGroup) {
      CHECK(a.trainable);
      CHECK(a.l2_change > 0);
    } else {
      CHECK_FALSE(a.trainable);
      CHECK(a.l2_change == 0.0);
    }
  }
}

TEST_CASE("stage 1 gradients reach every trainable group") {
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 2, 2, 10);
  auto config = fixed_config(TrainingStage::stage1);
  config.iterations = 3;
  config.batch_size = 2;
  const auto report = run_training(config, items, model);
  for (const auto& a : report.audit) {
    CHECK(a.trainable);
    CHECK(a.l2_change > 0);
  }
}

TEST_CASE("stage 1 checkpoint hands off the identity encoder") {
  const auto dir = test::temp_dir("train_ckpt");
  RestorationModel a(test::small_model_config(32, 1));
  const auto items = test::make_items(a, 2, 2, 11);
  auto config = fixed_config(TrainingStage::stage1);
  config.iterations = 2;
  const auto report = run_training(config, items, a, dir / "s1");
  REQUIRE(report.checkpoint);
  CHECK(report.checkpoint->handoff == std::vector<std::string>{kIdEncoderGroup});
  CHECK(report.checkpoint->backbone == std::vector<std::string>{kDenoiserGroup});
  CHECK(read_checkpoint_manifest(dir / "s1").stage == "stage1");

  RestorationModel b(test::small_model_config(32, 2));
  const auto control_fresh = b.group(kControlGroup).snapshot();
  load_stage1_handoff(b, dir / "s1", false);
  CHECK(b.group(kIdEncoderGroup).snapshot() == a.group(kIdEncoderGroup).snapshot());
  CHECK(b.group(kDenoiserGroup).snapshot() == a.group(kDenoiserGroup).snapshot());
  CHECK(b.group(kControlGroup).snapshot() == control_fresh);

  RestorationModel c(test::small_model_config(32, 2));
  load_stage1_handoff(c, dir / "s1", true);
  CHECK(c.group(kControlGroup).snapshot() == a.group(kControlGroup).snapshot());

  std::vector<ParameterGroup*> only_control{&a.group(kControlGroup)};
  save_checkpoint(dir / "bad", only_control, {kControlGroup}, "stage1");
  CHECK_THROWS_AS(load_stage1_handoff(b, dir / "bad", false), MissingGroupError);
}

TEST_CASE("zero iterations write no checkpoint") {
  const auto dir = test::temp_dir("train_zero");
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 1, 2, 12);
  auto config = fixed_config(TrainingStage::stage1);
  const auto report = run_training(config, items, model, dir / "ckpt");
  CHECK(report.losses.empty());
  CHECK_FALSE(report.checkpoint);
  CHECK_FALSE(std::filesystem::exists(dir / "ckpt.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "ckpt.bin"));
}

TEST_CASE("one-stage and two-stage schedules produce different control weights") {
  const auto dir = test::temp_dir("train_schedules");
  auto config = fixed_config(TrainingStage::one_stage);
  config.iterations = 4;

  RestorationModel one(test::small_model_config());
  const auto items = test::make_items(one, 2, 2, 13);
  run_training(config, items, one);

  RestorationModel two(test::small_model_config());
  config.stage = TrainingStage::stage1;
  run_training(config, items, two, dir / "s1");
  RestorationModel second(test::small_model_config());
  load_stage1_handoff(second, dir / "s1", false);
  config.stage = TrainingStage::stage2;
  run_training(config, items, second);

  CHECK(group_distance(one.group(kControlGroup).snapshot(), second.group(kControlGroup).snapshot()) > 1e-6);
}

TEST_CASE("a tiny set can be overfit") {
  ModelConfig mc;
  mc.seed = 1;
  RestorationModel model(mc);
  const auto items = test::make_items(model, 4, 4, 3);
  REQUIRE(items.size() == 16);
  auto config = fixed_config(TrainingStage::one_stage);
  config.iterations = 500;
  config.batch_size = 4;
  config.seed = 1;
  config.smoothing_window = 50;
  const auto report = run_training(config, items, model);
  MESSAGE("smoothed loss " << report.initial_smoothed << " -> " << report.final_smoothed);
  CHECK(report.final_smoothed < 0.5 * report.initial_smoothed);
}

TEST_CASE("identity and text conditions give different predictions") {
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 1, 2, 15);
  auto config = fixed_config(TrainingStage::stage1);
  config.iterations = 20;
  run_training(config, items, model);
  nn::NoGradGuard guard;
  nn::Var z = nn::constant(items[0].hq_latent);
  const auto control = model.control().encode(items[0].lq_latent);
  const auto a = predict_noise(model.denoiser(), z, 500, model.identity_prompt(items[0].references), &control,
                               model.schedule());
  const auto b = predict_noise(model.denoiser(), z, 500, model.text_prompt(), &control, model.schedule());
  CHECK(test::max_abs_diff(a.value().values(), b.value().values()) > 1e-6);
}

TEST_CASE("non-finite losses abort with diagnostics") {
  RestorationModel model(test::small_model_config());
  auto items = test::make_items(model, 1, 2, 16);
  model.set_denoiser(std::make_unique<OracleDenoiser>(model.schedule(), items[0].hq_latent, std::nan("")));
  auto config = fixed_config(TrainingStage::stage1);
  AdamW opt(config.optimizer);
  Rng rng(1);
  const Batch batch = assemble_batch(items, config, model, rng);
  try {
    training_step(batch, model, opt, config, rng);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("optimizer step 1") != std::string::npos);
  }
}

TEST_CASE("stage 1 text-only conditioning leaves the identity encoder untouched") {
  RestorationModel model(test::small_model_config());
  const auto items = test::make_items(model, 2, 2, 17);
  auto config = fixed_config(TrainingStage::stage1);
  config.iterations = 3;
  config.backbone_dropout_prob = 1.0;
  const auto id_before = model.group(kIdEncoderGroup).snapshot();
  run_training(config, items, model);
  CHECK(model.group(kIdEncoderGroup).snapshot() == id_before);
  config.backbone_dropout_prob = 1.5;
  CHECK_THROWS(config.validate());
}
