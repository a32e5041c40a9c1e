#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ocunet/augment.hpp"
#include "ocunet/dataset.hpp"
#include "ocunet/random.hpp"
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

std::vector<std::uint8_t> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

LabelMap random_labels(int h, int w, int classes, Rng& rng) {
  LabelMap map;
  map.h = h;
  map.w = w;
  map.data.resize(static_cast<std::size_t>(h) * w);
  for (auto& v : map.data) v = rng.uniform_int(0, classes - 1);
  return map;
}

}  // namespace

TEST_CASE("mask decoding maps the nominal intensities") {
  ImageU8 black;
  black.h = black.w = 4;
  black.channels = 1;
  black.pixels.assign(16, 0);
  LabelMap orca = decode_mask(black, MaskEncoding::orca3, "black.png");
  for (int v : orca.data) CHECK(v == 0);

  ImageU8 white = black;
  white.pixels.assign(16, 255);
  LabelMap binary = decode_mask(white, MaskEncoding::binary, "white.png");
  for (int v : binary.data) CHECK(v == 1);
}

TEST_CASE("mask encode/decode round-trips and rejects out-of-band values") {
  Rng rng(71);
  LabelMap labels = random_labels(16, 16, 3, rng);
  LabelMap back = decode_mask(encode_mask(labels, MaskEncoding::orca3), MaskEncoding::orca3,
                              "roundtrip");
  CHECK(back.data == labels.data);

  // Tolerance bands accept +-40 around the codes.
  ImageU8 near;
  near.h = near.w = 1;
  near.channels = 1;
  near.pixels = {160};
  CHECK(decode_mask(near, MaskEncoding::orca3, "near").data[0] == 1);

  near.pixels = {60};
  expect_throw_containing([&] { decode_mask(near, MaskEncoding::orca3, "bad_mask.png"); },
                          {"60", "bad_mask.png"});
  expect_throw_containing([&] { decode_mask(near, MaskEncoding::binary, "bad2.png"); },
                          {"bad2.png"});
}

TEST_CASE("patch extraction tiles, aligns, and rejects oversize patches") {
  Rng rng(72);
  const int h = 100, w = 120;
  Tensor<float> image = uniform_tensor<float>({h, w, 3}, 0.f, 1.f, rng);
  LabelMap labels = random_labels(h, w, 3, rng);

  SUBCASE("a patch the size of the image yields exactly one tile") {
    auto patches = extract_patches(image, labels, h, w, h, w);
    CHECK(patches.size() == 1);
    CHECK(patches[0].image.shape() == image.shape());
  }
  SUBCASE("grid counts drop partial border tiles") {
    CHECK(patch_grid_count(4500, 512, 512) == 8);
    CHECK(patch_grid_count(640, 640, 640) == 1);
    CHECK(patch_grid_count(100, 32, 32) == 3);
    auto patches = extract_patches(image, labels, 32, 32, 32, 32);
    CHECK(patches.size() == 3u * 3u);
  }
  SUBCASE("patch origin lands on the stride grid") {
    auto patches = extract_patches(image, labels, 32, 32, 16, 24);
    const int cols = patch_grid_count(w, 32, 24);
    for (std::size_t k = 0; k < patches.size(); ++k) {
      const int r = static_cast<int>(k) / cols;
      const int c = static_cast<int>(k) % cols;
      CHECK(patches[k].image.at({0, 0, 0}) == image.at({r * 16, c * 24, 0}));
      CHECK(patches[k].labels.data[0] == labels.data[static_cast<std::size_t>(r) * 16 * w + c * 24]);
    }
  }
  SUBCASE("reassembling non-overlapping patches reproduces the covered area") {
    auto patches = extract_patches(image, labels, 50, 60, 50, 60);
    REQUIRE(patches.size() == 4);
    for (int pr = 0; pr < 2; ++pr) {
      for (int pc = 0; pc < 2; ++pc) {
        const auto& patch = patches[pr * 2 + pc];
        for (int i = 0; i < 50; ++i) {
          for (int j = 0; j < 60; ++j) {
            CHECK(patch.image.at({i, j, 1}) == image.at({pr * 50 + i, pc * 60 + j, 1}));
          }
        }
      }
    }
  }
  SUBCASE("patches larger than the image are rejected") {
    CHECK_THROWS_AS(extract_patches(image, labels, 128, 32, 128, 32), std::invalid_argument);
  }
}

TEST_CASE("batch size defaults follow the patch-size rule") {
  CHECK(default_batch_size(512, 512) == 8);
  CHECK(default_batch_size(640, 640) == 4);
  CHECK(default_batch_size(64, 64) == 8);
  CHECK(default_batch_size(512, 640) == 4);
}

TEST_CASE("flips are involutions on image and mask together") {
  Rng rng(73);
  Sample sample;
  sample.image = uniform_tensor<float>({12, 10, 3}, 0.f, 1.f, rng);
  sample.labels = random_labels(12, 10, 3, rng);

  for (AugOp op : {AugOp::hflip, AugOp::vflip}) {
    AugmentationSpec spec;
    spec.ops = {op, op};
    Sample twice = augment(sample, spec);
    for (std::size_t i = 0; i < sample.image.size(); ++i) {
      CHECK(twice.image.data()[i] == sample.image.data()[i]);
    }
    CHECK(twice.labels.data == sample.labels.data);
  }

  // A single horizontal flip mirrors columns in both layers.
  AugmentationSpec spec;
  spec.ops = {AugOp::hflip};
  Sample once = augment(sample, spec);
  CHECK(once.image.at({3, 0, 0}) == sample.image.at({3, 9, 0}));
  CHECK(once.labels.data[3 * 10 + 0] == sample.labels.data[3 * 10 + 9]);
}

TEST_CASE("an empty augmentation spec is the identity") {
  Rng rng(74);
  Sample sample;
  sample.image = uniform_tensor<float>({8, 8, 3}, 0.f, 1.f, rng);
  sample.labels = random_labels(8, 8, 2, rng);
  Sample out = augment(sample, AugmentationSpec{});
  for (std::size_t i = 0; i < sample.image.size(); ++i) {
    CHECK(out.image.data()[i] == sample.image.data()[i]);
  }
  CHECK(out.labels.data == sample.labels.data);
}

TEST_CASE("gaussian blur preserves constants and reproduces its kernel on an impulse") {
  Tensor<float> constant = Tensor<float>::full({9, 9, 3}, 0.4f);
  Tensor<float> blurred = gaussian_blur(constant, 1.0);
  for (std::size_t i = 0; i < blurred.size(); ++i) {
    CHECK(blurred.data()[i] == doctest::Approx(0.4f).epsilon(1e-6));
  }

  const double sigma = 1.0;
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size()) / 2;
  CHECK(radius == 3);

  Tensor<float> impulse = Tensor<float>::zeros({17, 17, 1});
  impulse.mutable_data()[8 * 17 + 8] = 1.f;
  Tensor<float> response = gaussian_blur(impulse, sigma);
  // Analytic separable kernel: exp(-(di^2+dj^2) / (2 sigma^2)), normalized.
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  for (int di = -radius; di <= radius; ++di) {
    for (int dj = -radius; dj <= radius; ++dj) {
      const double want =
          std::exp(-0.5 * (di * di + dj * dj) / (sigma * sigma)) / (norm * norm);
      CHECK(response.at({8 + di, 8 + dj, 0}) == doctest::Approx(want).epsilon(1e-6));
    }
  }
  CHECK_THROWS_AS(gaussian_blur(constant, 0.0), std::invalid_argument);
}

TEST_CASE("sharpen boosts contrast and stays clamped") {
  Rng rng(75);
  Tensor<float> image = uniform_tensor<float>({16, 16, 3}, 0.f, 1.f, rng);
  Tensor<float> sharp = sharpen(image, 1.0, 1.0);
  for (std::size_t i = 0; i < sharp.size(); ++i) {
    CHECK(sharp.data()[i] >= 0.f);
    CHECK(sharp.data()[i] <= 1.f);
  }
  Tensor<float> constant = Tensor<float>::full({8, 8, 3}, 0.6f);
  Tensor<float> same = sharpen(constant, 1.0, 1.0);
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(same.data()[i] == doctest::Approx(0.6f).epsilon(1e-6));
  }
}

TEST_CASE("derived class weights invert frequencies at unit mean") {
  ClassWeights<float> even = derive_class_weights({0.5, 0.5});
  CHECK(even.values[0] == doctest::Approx(1.f));
  CHECK(even.values[1] == doctest::Approx(1.f));

  ClassWeights<float> skewed = derive_class_weights({0.9, 0.1});
  CHECK(skewed.values[0] == doctest::Approx(0.18182f).epsilon(1e-3));
  CHECK(skewed.values[1] == doctest::Approx(1.81818f).epsilon(1e-3));
  CHECK((skewed.values[0] + skewed.values[1]) / 2.f == doctest::Approx(1.f));

  // A zero-frequency class keeps a finite capped weight.
  ClassWeights<float> capped = derive_class_weights({1.0, 0.0});
  CHECK(std::isfinite(capped.values[1]));
  CHECK(capped.values[1] > capped.values[0]);
}

TEST_CASE("synthetic datasets are deterministic, valid, and learnable") {
  const fs::path dir_a = scratch_dir("synth_a");
  const fs::path dir_b = scratch_dir("synth_b");
  SynthOptions options;
  options.count = 6;
  options.h = options.w = 32;
  options.classes = 3;
  options.seed = 99;
  SampleManifest a = synth_dataset(options, dir_a.string());
  SampleManifest b = synth_dataset(options, dir_b.string());

  SUBCASE("same seed gives bitwise-identical files") {
    for (const auto& entry : a.entries) {
      CHECK(file_bytes(dir_a / entry.image_path) == file_bytes(dir_b / entry.image_path));
      CHECK(file_bytes(dir_a / entry.mask_path) == file_bytes(dir_b / entry.mask_path));
    }
  }
  SUBCASE("masks decode to valid class indices and frequencies match pixel counts") {
    std::vector<std::uint64_t> direct(3, 0);
    std::uint64_t total = 0;
    for (const auto& entry : a.entries) {
      if (entry.split != "train") continue;
      LabelMap labels = decode_mask(read_png((dir_a / entry.mask_path).string()),
                                    a.encoding, entry.mask_path);
      for (int v : labels.data) {
        REQUIRE(v >= 0);
        REQUIRE(v < 3);
        ++direct[v];
        ++total;
      }
    }
    const auto freqs = class_frequencies(a);
    for (int c = 0; c < 3; ++c) {
      CHECK(freqs[c] == doctest::Approx(static_cast<double>(direct[c]) / total).epsilon(1e-12));
    }
  }
  SUBCASE("a nearest-class-colour baseline reaches dice above 0.9") {
    // Class colours as produced by the generator.
    const float colors[3][3] = {{0.10f, 0.08f, 0.12f}, {0.75f, 0.55f, 0.70f},
                                {0.45f, 0.15f, 0.50f}};
    ConfusionCounts counts(3);
    for (const auto& entry : a.entries) {
      Sample sample = load_sample(entry, a.encoding, a.base_dir);
      LabelMap guess;
      guess.h = sample.labels.h;
      guess.w = sample.labels.w;
      guess.data.resize(sample.labels.size());
      for (std::size_t p = 0; p < guess.data.size(); ++p) {
        int best = 0;
        float best_d = 1e9f;
        for (int c = 0; c < 3; ++c) {
          float d = 0;
          for (int ch = 0; ch < 3; ++ch) {
            const float diff = sample.image.data()[p * 3 + ch] - colors[c][ch];
            d += diff * diff;
          }
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        guess.data[p] = best;
      }
      counts.merge(confusion(guess, sample.labels, 3));
    }
    MetricsReport report = compute_metrics(counts);
    CHECK(report.average.dice > 0.9);
  }
}

TEST_CASE("manifest loading validates files and split exclusivity") {
  const fs::path dir = scratch_dir("manifest");
  SynthOptions options;
  options.count = 4;
  options.h = options.w = 16;
  options.classes = 2;
  options.seed = 5;
  SampleManifest manifest = synth_dataset(options, dir.string());

  SampleManifest loaded = load_manifest((dir / "manifest.json").string());
  CHECK(loaded.encoding == MaskEncoding::binary);
  CHECK(loaded.entries.size() == 4);
  CHECK(loaded.patch_h == 16);

  SUBCASE("a sample present in both splits is rejected") {
    SampleManifest bad = loaded;
    bad.entries.push_back(bad.entries[0]);
    bad.entries.back().split = "test";
    save_manifest(bad, (dir / "bad.json").string());
    CHECK_THROWS_AS(load_manifest((dir / "bad.json").string()), std::runtime_error);
  }
  SUBCASE("a missing referenced file is named") {
    SampleManifest bad = loaded;
    bad.entries[0].image_path = "images/nope.png";
    save_manifest(bad, (dir / "missing.json").string());
    expect_throw_containing([&] { load_manifest((dir / "missing.json").string()); },
                            {"nope.png"});
  }
  SUBCASE("sample loading rejects mismatched mask dimensions") {
    ImageU8 small;
    small.h = small.w = 8;
    small.channels = 1;
    small.pixels.assign(64, 0);
    write_png((dir / "masks" / "small.png").string(), small);
    ManifestEntry entry = loaded.entries[0];
    entry.mask_path = "masks/small.png";
    expect_throw_containing([&] { load_sample(entry, loaded.encoding, loaded.base_dir); },
                            {"small.png"});
  }
}

TEST_CASE("sample store cuts the manifest's patch grid") {
  const fs::path dir = scratch_dir("store");
  SynthOptions options;
  options.count = 2;
  options.h = options.w = 64;
  options.classes = 2;
  options.seed = 17;
  options.train_fraction = 1.0;
  SampleManifest manifest = synth_dataset(options, dir.string());
  manifest.patch_h = manifest.patch_w = 32;  // 2x2 grid per image
  SampleStore store(manifest);
  auto refs = store.patch_index(manifest.split_indices("train"));
  CHECK(refs.size() == 2u * 4u);
  PatchPair pair = store.patch(refs[3]);
  CHECK(pair.image.shape() == Shape{32, 32, 3});
  const Sample& full = store.get(0);
  CHECK(pair.image.at({0, 0, 0}) == full.image.at({32, 32, 0}));
  CHECK(pair.labels.data[0] == full.labels.data[32 * 64 + 32]);
}

TEST_CASE("resize keeps images bilinear and labels nearest") {
  Rng rng(76);
  Tensor<float> image = uniform_tensor<float>({8, 8, 3}, 0.f, 1.f, rng);
  Tensor<float> up = resize_bilinear(image, 16, 16);
  CHECK(up.shape() == Shape{16, 16, 3});
  // Average intensity is approximately preserved.
  double before = 0, after = 0;
  for (std::size_t i = 0; i < image.size(); ++i) before += image.data()[i];
  for (std::size_t i = 0; i < up.size(); ++i) after += up.data()[i];
  CHECK(after / up.size() == doctest::Approx(before / image.size()).epsilon(0.02));

  LabelMap labels = random_labels(8, 8, 3, rng);
  LabelMap up_labels = resize_nearest(labels, 16, 16);
  CHECK(up_labels.h == 16);
  for (int v : up_labels.data) {
    CHECK(v >= 0);
    CHECK(v < 3);
  }
  CHECK(up_labels.data[0] == labels.data[0]);
}
