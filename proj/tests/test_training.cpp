#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ocunet/autograd.hpp"
#include "ocunet/checkpoint.hpp"
#include "ocunet/dataset.hpp"
#include "ocunet/ops.hpp"
#include "ocunet/optimizer.hpp"
#include "ocunet/schedule.hpp"
#include "ocunet/trainer.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace ocunet;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "ocunet_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig tiny_config(int classes, int size) {
  ModelConfig config;
  config.base_channels = 2;
  config.num_classes = classes;
  config.input_h = size;
  config.input_w = size;
  config.se_ratio = 2;
  config.bn_momentum = 0.9;
  return config;
}

}  // namespace

TEST_CASE("adam leaves parameters alone under zero gradients but advances t") {
  Tensor<double> w = Tensor<double>::from_data({3}, {1.0, -2.0, 0.5}, true);
  ParamList<double> params{{"w", w, true}};
  Adam<double> adam(AdamConfig<double>{}, params);
  w.zero_grad();
  adam.step();
  CHECK(adam.steps() == 1);
  CHECK(w.data()[0] == 1.0);
  CHECK(w.data()[1] == -2.0);
  CHECK(w.data()[2] == 0.5);
}

TEST_CASE("the first adam step moves by about -lr * sign(gradient)") {
  Tensor<double> w = Tensor<double>::from_data({2}, {1.0, 1.0}, true);
  ParamList<double> params{{"w", w, true}};
  AdamConfig<double> config;
  config.lr = 1e-3;
  Adam<double> adam(config, params);
  w.zero_grad();
  w.impl()->grad_buffer()[0] = 0.37;
  w.impl()->grad_buffer()[1] = -4.2;
  adam.step();
  CHECK(w.data()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-3));
  CHECK(w.data()[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-3));
}

TEST_CASE("adam on f(w) = w^2 tracks a scalar reference to 1e-12") {
  Tensor<double> w = Tensor<double>::scalar(1.0, true);
  ParamList<double> params{{"w", w, true}};
  AdamConfig<double> config;
  config.lr = 0.1;
  Adam<double> adam(config, params);

  // Scalar reference implementation of the same update rule.
  double ref_w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    w.zero_grad();
    backward(mul(w, w));
    adam.step();

    const double g = 2.0 * ref_w;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(config.beta1, t));
    const double v_hat = v / (1.0 - std::pow(config.beta2, t));
    ref_w -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    CHECK(std::abs(w.item() - ref_w) < 1e-12);
  }
}

TEST_CASE("adam aborts on a non-finite gradient naming the parameter") {
  Tensor<float> w = Tensor<float>::from_data({2}, {1.f, 2.f}, true);
  ParamList<float> params{{"enc1.conv1.kernel", w, true}};
  Adam<float> adam(AdamConfig<float>{}, params);
  w.zero_grad();
  w.impl()->grad_buffer()[1] = std::numeric_limits<float>::quiet_NaN();
  expect_throw_containing([&] { adam.step(); }, {"enc1.conv1.kernel"});
}

TEST_CASE("plateau scheduler halves on stalls and clamps at min_lr") {
  PlateauPolicy policy;
  policy.factor = 0.5;
  policy.patience = 3;
  policy.min_lr = 1e-5;
  PlateauScheduler sched(policy, 3e-4);

  SUBCASE("a constant metric halves the rate every `patience` epochs") {
    double lr = 3e-4;
    for (int epoch = 1; epoch <= 6; ++epoch) lr = sched.update(0.5);
    CHECK(sched.lr() == doctest::Approx(7.5e-5));
    // After epoch 3 exactly one halving had happened.
    PlateauScheduler fresh(policy, 3e-4);
    for (int epoch = 1; epoch <= 3; ++epoch) fresh.update(0.5);
    CHECK(fresh.lr() == doctest::Approx(1.5e-4));
  }
  SUBCASE("improvement keeps the rate untouched") {
    for (int epoch = 0; epoch < 10; ++epoch) sched.update(0.1 * epoch);
    CHECK(sched.lr() == doctest::Approx(3e-4));
  }
  SUBCASE("improvement exactly at the patience boundary resets the counter") {
    sched.update(0.5);
    sched.update(0.5);
    sched.update(0.9);  // third epoch improves: no reduction
    CHECK(sched.lr() == doctest::Approx(3e-4));
    sched.update(0.9);
    sched.update(0.9);
    CHECK(sched.lr() == doctest::Approx(3e-4));
    sched.update(0.9);  // three stale epochs now
    CHECK(sched.lr() == doctest::Approx(1.5e-4));
  }
  SUBCASE("the rate never drops below min_lr") {
    for (int epoch = 0; epoch < 100; ++epoch) sched.update(0.5);
    CHECK(sched.lr() >= policy.min_lr);
    CHECK(sched.lr() == doctest::Approx(policy.min_lr).epsilon(0.6));
  }
}

TEST_CASE("early stopping waits out its patience") {
  EarlyStopPolicy policy;
  policy.patience = 3;
  EarlyStopMonitor monitor(policy);
  CHECK_FALSE(monitor.update(0.5));  // epoch 0: improvement
  CHECK_FALSE(monitor.update(0.5));  // stale 1
  CHECK_FALSE(monitor.update(0.5));  // stale 2
  CHECK(monitor.update(0.5));        // stale 3 -> stop
  CHECK(monitor.best_epoch() == 0);

  EarlyStopMonitor improving(policy);
  for (int epoch = 0; epoch < 50; ++epoch) CHECK_FALSE(improving.update(0.1 * epoch));
}

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
  const fs::path dir = scratch_dir("checkpoint");
  ModelConfig config = tiny_config(3, 16);
  OCUNet<float> model(config, 13);
  Adam<float> adam(AdamConfig<float>{}, model.parameters());

  Rng rng(81);
  Tensor<float> batch = uniform_tensor<float>({1, 16, 16, 3}, 0.f, 1.f, rng);
  NoGradGuard no_grad;
  Tensor<float> before = model.forward(batch, false);

  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, snapshot_model(model, &adam));

  SUBCASE("a rebuilt model reproduces the forward pass bitwise") {
    Checkpoint loaded = load_checkpoint(path);
    OCUNet<float> restored = model_from_checkpoint(loaded);
    Tensor<float> after = restored.forward(batch, false);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after.data()[i] == before.data()[i]);
    }
  }
  SUBCASE("flipping one payload byte trips the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const std::streamoff size = f.tellg();
    f.seekp(size / 2);
    char byte = 0;
    f.seekg(size / 2);
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(size / 2);
    f.write(&byte, 1);
    f.close();
    expect_throw_containing([&] { load_checkpoint(path); }, {"checksum"});
  }
  SUBCASE("a truncated file is rejected") {
    std::vector<char> bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    const std::string cut = (dir / "cut.ckpt").string();
    std::ofstream(cut, std::ios::binary).write(bytes.data(), bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(cut), std::runtime_error);
  }
  SUBCASE("loading into a different architecture fails descriptively") {
    Checkpoint loaded = load_checkpoint(path);
    OCUNet<float> other(tiny_config(1, 16), 13);
    expect_throw_containing([&] { restore_model(other, loaded); }, {"architecture"});
  }
  SUBCASE("optimizer moments survive the round trip") {
    Checkpoint loaded = load_checkpoint(path);
    OCUNet<float> restored = model_from_checkpoint(loaded);
    Adam<float> fresh(AdamConfig<float>{}, restored.parameters());
    restore_model(restored, loaded, &fresh);
    CHECK(fresh.steps() == adam.steps());
    REQUIRE(fresh.slot_count() == adam.slot_count());
    for (std::size_t i = 0; i < fresh.slot_count(); ++i) {
      CHECK(fresh.slot_m(i) == adam.slot_m(i));
      CHECK(fresh.slot_v(i) == adam.slot_v(i));
    }
  }
}

TEST_CASE("training is deterministic, logged, and improves on a tiny set") {
  const fs::path dir = scratch_dir("train");
  SynthOptions options;
  options.count = 4;
  options.h = options.w = 16;
  options.classes = 2;
  options.seed = 21;
  options.train_fraction = 1.0;
  SampleManifest manifest = synth_dataset(options, dir.string());

  TrainOptions train_options;
  train_options.epochs = 6;
  train_options.batch_size = 2;
  train_options.seed = 3;
  train_options.log_path = (dir / "log.csv").string();

  OCUNet<float> model_a(tiny_config(1, 16), train_options.seed);
  TrainResult a = train(model_a, manifest, train_options);

  SUBCASE("identical seeds give identical histories") {
    OCUNet<float> model_b(tiny_config(1, 16), train_options.seed);
    train_options.log_path.clear();
    TrainResult b = train(model_b, manifest, train_options);
    CHECK(format_epoch_log(a.history) == format_epoch_log(b.history));
  }
  SUBCASE("the epoch log has the documented columns") {
    std::ifstream log(dir / "log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,train_loss,val_dice,val_miou,lr");
    int rows = 0;
    std::string line;
    while (std::getline(log, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == static_cast<int>(a.history.size()));
  }
  SUBCASE("learning rate never increases") {
    for (std::size_t i = 1; i < a.history.size(); ++i) {
      CHECK(a.history[i].lr <= a.history[i - 1].lr);
    }
  }
  SUBCASE("loss falls over a short run on the fixed tiny set") {
    TrainOptions longer = train_options;
    longer.epochs = 25;
    longer.max_steps = 50;
    longer.log_path.clear();
    OCUNet<float> model_c(tiny_config(1, 16), 4);
    TrainResult c = train(model_c, manifest, longer);
    REQUIRE(c.history.size() >= 2);
    CHECK(c.history.back().train_loss < c.history.front().train_loss);
  }
}

TEST_CASE("one sample and one epoch produce exactly one optimizer step") {
  const fs::path dir = scratch_dir("train_single");
  SynthOptions options;
  options.count = 1;
  options.h = options.w = 16;
  options.classes = 2;
  options.seed = 5;
  options.train_fraction = 1.0;
  SampleManifest manifest = synth_dataset(options, dir.string());

  TrainOptions train_options;
  train_options.epochs = 1;
  train_options.batch_size = 8;
  OCUNet<float> model(tiny_config(1, 16), 1);
  TrainResult result = train(model, manifest, train_options);
  CHECK(result.steps == 1);
  CHECK(result.history.size() == 1);
}

TEST_CASE("training rejects a class-count mismatch with the encoding") {
  const fs::path dir = scratch_dir("train_mismatch");
  SynthOptions options;
  options.count = 2;
  options.h = options.w = 16;
  options.classes = 3;
  options.seed = 6;
  options.train_fraction = 1.0;
  SampleManifest manifest = synth_dataset(options, dir.string());
  OCUNet<float> model(tiny_config(1, 16), 1);
  CHECK_THROWS_AS(train(model, manifest, TrainOptions{}), std::invalid_argument);
}

TEST_CASE("the deterministic validation holdout is reproducible") {
  const fs::path dir = scratch_dir("split");
  SynthOptions options;
  options.count = 10;
  options.h = options.w = 16;
  options.classes = 2;
  options.seed = 8;
  options.train_fraction = 1.0;
  SampleManifest manifest = synth_dataset(options, dir.string());
  auto [train_a, val_a] = train_val_split(manifest, 0.2, 42);
  auto [train_b, val_b] = train_val_split(manifest, 0.2, 42);
  CHECK(train_a == train_b);
  CHECK(val_a == val_b);
  CHECK(val_a.size() == 2);
  CHECK(train_a.size() == 8);
  auto [train_c, val_c] = train_val_split(manifest, 0.2, 43);
  CHECK(train_a != train_c);
}
