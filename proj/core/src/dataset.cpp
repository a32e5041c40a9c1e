#include "ocunet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ocunet {

int class_count(MaskEncoding encoding) { return encoding == MaskEncoding::orca3 ? 3 : 2; }

std::string encoding_name(MaskEncoding encoding) {
  return encoding == MaskEncoding::orca3 ? "orca3" : "binary";
}

MaskEncoding encoding_from_name(const std::string& name) {
  if (name == "orca3") return MaskEncoding::orca3;
  if (name == "binary") return MaskEncoding::binary;
  throw std::invalid_argument("manifest: unknown encoding '" + name + "'");
}

namespace {

constexpr int kBandTolerance = 40;

const std::vector<int>& nominal_codes(MaskEncoding encoding) {
  static const std::vector<int> orca{0, 128, 255};
  static const std::vector<int> binary{0, 255};
  return encoding == MaskEncoding::orca3 ? orca : binary;
}

int gray_value(const ImageU8& mask, std::size_t pixel) {
  if (mask.channels == 1) return mask.pixels[pixel];
  const std::uint8_t* p = mask.pixels.data() + pixel * mask.channels;
  return (static_cast<int>(p[0]) + p[1] + p[2] + 1) / 3;
}

}  // namespace

LabelMap decode_mask(const ImageU8& mask, MaskEncoding encoding, const std::string& source) {
  const auto& codes = nominal_codes(encoding);
  LabelMap labels;
  labels.h = mask.h;
  labels.w = mask.w;
  labels.data.resize(static_cast<std::size_t>(mask.h) * mask.w);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    const int v = gray_value(mask, i);
    int cls = -1;
    for (std::size_t c = 0; c < codes.size(); ++c) {
      if (std::abs(v - codes[c]) <= kBandTolerance) {
        cls = static_cast<int>(c);
        break;
      }
    }
    if (cls < 0) {
      throw std::runtime_error("mask: intensity " + std::to_string(v) +
                               " outside every tolerance band in " + source);
    }
    labels.data[i] = cls;
  }
  return labels;
}

ImageU8 encode_mask(const LabelMap& labels, MaskEncoding encoding) {
  const auto& codes = nominal_codes(encoding);
  ImageU8 mask;
  mask.h = labels.h;
  mask.w = labels.w;
  mask.channels = 1;
  mask.pixels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int cls = labels.data[i];
    if (cls < 0 || cls >= static_cast<int>(codes.size())) {
      throw std::invalid_argument("mask: class index " + std::to_string(cls) +
                                  " not encodable as " + encoding_name(encoding));
    }
    mask.pixels[i] = static_cast<std::uint8_t>(codes[cls]);
  }
  return mask;
}

std::vector<std::size_t> SampleManifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

SampleManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: " + path + " is not valid JSON: " + e.what());
  }

  SampleManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  m.encoding = encoding_from_name(doc.at("encoding").get<std::string>());
  if (doc.contains("patch_size")) {
    const auto& ps = doc.at("patch_size");
    m.patch_h = ps.at(0).get<int>();
    m.patch_w = ps.at(1).get<int>();
  }
  if (doc.contains("fit")) {
    const std::string fit = doc.at("fit").get<std::string>();
    if (fit == "patch") {
      m.fit = FitMode::patch;
    } else if (fit == "resize") {
      m.fit = FitMode::resize;
    } else {
      throw std::runtime_error("manifest: unknown fit mode '" + fit + "' in " + path);
    }
  }

  std::set<std::string> train_images, test_images;
  for (const auto& rec : doc.at("samples")) {
    ManifestEntry entry;
    entry.image_path = rec.at("image").get<std::string>();
    entry.mask_path = rec.at("mask").get<std::string>();
    entry.split = rec.at("split").get<std::string>();
    if (entry.split != "train" && entry.split != "test") {
      throw std::runtime_error("manifest: split must be train or test, got '" + entry.split +
                               "' in " + path);
    }
    (entry.split == "train" ? train_images : test_images).insert(entry.image_path);
    m.entries.push_back(std::move(entry));
  }
  for (const auto& img : train_images) {
    if (test_images.count(img)) {
      throw std::runtime_error("manifest: '" + img + "' appears in both splits");
    }
  }
  for (const auto& entry : m.entries) {
    for (const std::string& rel : {entry.image_path, entry.mask_path}) {
      const fs::path full = fs::path(m.base_dir) / rel;
      if (!fs::exists(full)) {
        throw std::runtime_error("manifest: referenced file missing: " + full.string());
      }
    }
  }
  return m;
}

void save_manifest(const SampleManifest& manifest, const std::string& path) {
  nlohmann::json doc;
  doc["encoding"] = encoding_name(manifest.encoding);
  if (manifest.patch_h > 0 && manifest.patch_w > 0) {
    doc["patch_size"] = {manifest.patch_h, manifest.patch_w};
  }
  doc["fit"] = manifest.fit == FitMode::patch ? "patch" : "resize";
  doc["samples"] = nlohmann::json::array();
  for (const auto& entry : manifest.entries) {
    doc["samples"].push_back(
        {{"image", entry.image_path}, {"mask", entry.mask_path}, {"split", entry.split}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << doc.dump(2) << '\n';
}

Sample load_sample(const ManifestEntry& entry, MaskEncoding encoding,
                   const std::string& base_dir) {
  const std::string image_path = (fs::path(base_dir) / entry.image_path).string();
  const std::string mask_path = (fs::path(base_dir) / entry.mask_path).string();
  ImageU8 raw = read_png(image_path);
  ImageU8 mask = read_png(mask_path);
  if (raw.h != mask.h || raw.w != mask.w) {
    throw std::runtime_error("sample: image " + image_path + " is " + std::to_string(raw.h) +
                             "x" + std::to_string(raw.w) + " but mask " + mask_path + " is " +
                             std::to_string(mask.h) + "x" + std::to_string(mask.w));
  }

  Sample sample;
  std::vector<float> values(static_cast<std::size_t>(raw.h) * raw.w * 3);
  const float inv = 1.0f / 255.0f;
  for (std::size_t p = 0; p < static_cast<std::size_t>(raw.h) * raw.w; ++p) {
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t v = raw.channels == 1 ? raw.pixels[p] : raw.pixels[p * 3 + c];
      values[p * 3 + c] = static_cast<float>(v) * inv;
    }
  }
  sample.image = Tensor<float>::from_data({raw.h, raw.w, 3}, std::move(values));
  sample.labels = decode_mask(mask, encoding, mask_path);
  return sample;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w) {
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * c);
  const float sy = static_cast<float>(h) / out_h;
  const float sx = static_cast<float>(w) / out_w;
  const float* src = image.data();
  for (int i = 0; i < out_h; ++i) {
    float fy = (i + 0.5f) * sy - 0.5f;
    fy = std::min(std::max(fy, 0.0f), static_cast<float>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      float fx = (j + 0.5f) * sx - 0.5f;
      fx = std::min(std::max(fx, 0.0f), static_cast<float>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const float v00 = src[(static_cast<std::size_t>(y0) * w + x0) * c + ch];
        const float v01 = src[(static_cast<std::size_t>(y0) * w + x1) * c + ch];
        const float v10 = src[(static_cast<std::size_t>(y1) * w + x0) * c + ch];
        const float v11 = src[(static_cast<std::size_t>(y1) * w + x1) * c + ch];
        const float top = v00 + (v01 - v00) * wx;
        const float bottom = v10 + (v11 - v10) * wx;
        out[(static_cast<std::size_t>(i) * out_w + j) * c + ch] = top + (bottom - top) * wy;
      }
    }
  }
  return Tensor<float>::from_data({out_h, out_w, c}, std::move(out));
}

LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
  LabelMap out;
  out.h = out_h;
  out.w = out_w;
  out.data.resize(static_cast<std::size_t>(out_h) * out_w);
  const float sy = static_cast<float>(labels.h) / out_h;
  const float sx = static_cast<float>(labels.w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const int y = std::min(static_cast<int>((i + 0.5f) * sy), labels.h - 1);
    for (int j = 0; j < out_w; ++j) {
      const int x = std::min(static_cast<int>((j + 0.5f) * sx), labels.w - 1);
      out.data[static_cast<std::size_t>(i) * out_w + j] =
          labels.data[static_cast<std::size_t>(y) * labels.w + x];
    }
  }
  return out;
}

int patch_grid_count(int size, int patch, int stride) {
  if (patch > size) return 0;
  return (size - patch) / stride + 1;
}

std::vector<PatchPair> extract_patches(const Tensor<float>& image, const LabelMap& labels,
                                       int patch_h, int patch_w, int stride_h, int stride_w) {
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (labels.h != h || labels.w != w) {
    throw std::invalid_argument("patches: image and label dimensions disagree");
  }
  if (patch_h > h || patch_w > w) {
    throw std::invalid_argument("patches: patch " + std::to_string(patch_h) + "x" +
                                std::to_string(patch_w) + " larger than image " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  if (stride_h < 1 || stride_w < 1) throw std::invalid_argument("patches: stride must be >= 1");

  std::vector<PatchPair> out;
  const int rows = patch_grid_count(h, patch_h, stride_h);
  const int cols = patch_grid_count(w, patch_w, stride_w);
  out.reserve(static_cast<std::size_t>(rows) * cols);
  const float* src = image.data();
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      const int i0 = r * stride_h;
      const int j0 = q * stride_w;
      PatchPair pair;
      std::vector<float> img(static_cast<std::size_t>(patch_h) * patch_w * c);
      pair.labels.h = patch_h;
      pair.labels.w = patch_w;
      pair.labels.data.resize(static_cast<std::size_t>(patch_h) * patch_w);
      for (int i = 0; i < patch_h; ++i) {
        const std::size_t src_row = (static_cast<std::size_t>(i0 + i) * w + j0);
        std::copy_n(src + src_row * c, static_cast<std::size_t>(patch_w) * c,
                    img.data() + static_cast<std::size_t>(i) * patch_w * c);
        std::copy_n(labels.data.data() + src_row, patch_w,
                    pair.labels.data.data() + static_cast<std::size_t>(i) * patch_w);
      }
      pair.image = Tensor<float>::from_data({patch_h, patch_w, c}, std::move(img));
      out.push_back(std::move(pair));
    }
  }
  return out;
}

int default_batch_size(int patch_h, int patch_w) {
  return (patch_h >= 640 || patch_w >= 640) ? 4 : 8;
}

std::vector<double> class_frequencies(const SampleManifest& manifest) {
  const auto train = manifest.split_indices("train");
  if (train.empty()) throw std::runtime_error("frequencies: manifest has no train split");
  const int classes = class_count(manifest.encoding);
  std::vector<std::uint64_t> counts(classes, 0);
  std::uint64_t total = 0;
  for (std::size_t idx : train) {
    const auto& entry = manifest.entries[idx];
    const std::string mask_path = (fs::path(manifest.base_dir) / entry.mask_path).string();
    LabelMap labels = decode_mask(read_png(mask_path), manifest.encoding, mask_path);
    for (int cls : labels.data) ++counts[cls];
    total += labels.size();
  }
  std::vector<double> out(classes);
  for (int c = 0; c < classes; ++c) out[c] = static_cast<double>(counts[c]) / total;
  return out;
}

ClassWeights<float> derive_class_weights(const std::vector<double>& frequencies) {
  // Frequencies are floored so an absent class keeps a finite (capped) weight.
  constexpr double kFloor = 1e-6;
  std::vector<double> inv(frequencies.size());
  double mean = 0.0;
  for (std::size_t c = 0; c < frequencies.size(); ++c) {
    inv[c] = 1.0 / std::max(frequencies[c], kFloor);
    mean += inv[c];
  }
  mean /= static_cast<double>(frequencies.size());
  ClassWeights<float> weights;
  weights.values.resize(frequencies.size());
  for (std::size_t c = 0; c < frequencies.size(); ++c) {
    weights.values[c] = static_cast<float>(inv[c] / mean);
  }
  return weights;
}

SampleStore::SampleStore(const SampleManifest& manifest, std::size_t cache_budget_bytes)
    : manifest_(manifest),
      budget_(cache_budget_bytes),
      cache_(manifest.entries.size()),
      loaded_(manifest.entries.size(), false) {}

const Sample& SampleStore::get(std::size_t entry_index) {
  if (entry_index >= manifest_.entries.size()) {
    throw std::out_of_range("store: entry index out of range");
  }
  if (!loaded_[entry_index]) {
    Sample sample =
        load_sample(manifest_.entries[entry_index], manifest_.encoding, manifest_.base_dir);
    if (manifest_.fit == FitMode::resize && manifest_.patch_h > 0 &&
        (sample.image.dim(0) != manifest_.patch_h || sample.image.dim(1) != manifest_.patch_w)) {
      sample.image = resize_bilinear(sample.image, manifest_.patch_h, manifest_.patch_w);
      sample.labels = resize_nearest(sample.labels, manifest_.patch_h, manifest_.patch_w);
    }
    const std::size_t bytes =
        sample.image.size() * sizeof(float) + sample.labels.size() * sizeof(int);
    if (cached_bytes_ + bytes > budget_) {
      // Evict everything; the budget is a soft guard against huge datasets.
      for (std::size_t i = 0; i < cache_.size(); ++i) {
        if (loaded_[i] && i != entry_index) {
          cache_[i] = Sample{};
          loaded_[i] = false;
        }
      }
      cached_bytes_ = 0;
    }
    cache_[entry_index] = std::move(sample);
    loaded_[entry_index] = true;
    cached_bytes_ += bytes;
  }
  return cache_[entry_index];
}

std::vector<PatchRef> SampleStore::patch_index(const std::vector<std::size_t>& entries) {
  std::vector<PatchRef> refs;
  for (std::size_t idx : entries) {
    const Sample& sample = get(idx);
    if (manifest_.patch_h <= 0 || manifest_.fit == FitMode::resize) {
      refs.push_back({idx, 0, 0});
      continue;
    }
    const int rows = patch_grid_count(sample.image.dim(0), manifest_.patch_h, manifest_.patch_h);
    const int cols = patch_grid_count(sample.image.dim(1), manifest_.patch_w, manifest_.patch_w);
    if (rows == 0 || cols == 0) {
      throw std::runtime_error("store: entry " + manifest_.entries[idx].image_path +
                               " is smaller than the patch size");
    }
    for (int r = 0; r < rows; ++r) {
      for (int q = 0; q < cols; ++q) refs.push_back({idx, r, q});
    }
  }
  return refs;
}

PatchPair SampleStore::patch(const PatchRef& ref) {
  const Sample& sample = get(ref.entry);
  PatchPair pair;
  if (manifest_.patch_h <= 0 || manifest_.fit == FitMode::resize) {
    pair.image = sample.image;
    pair.labels = sample.labels;
    return pair;
  }
  const int ph = manifest_.patch_h, pw = manifest_.patch_w;
  const int i0 = ref.row * ph, j0 = ref.col * pw;
  const int w = sample.image.dim(1), c = sample.image.dim(2);
  std::vector<float> img(static_cast<std::size_t>(ph) * pw * c);
  pair.labels.h = ph;
  pair.labels.w = pw;
  pair.labels.data.resize(static_cast<std::size_t>(ph) * pw);
  const float* src = sample.image.data();
  for (int i = 0; i < ph; ++i) {
    const std::size_t src_row = static_cast<std::size_t>(i0 + i) * w + j0;
    std::copy_n(src + src_row * c, static_cast<std::size_t>(pw) * c,
                img.data() + static_cast<std::size_t>(i) * pw * c);
    std::copy_n(sample.labels.data.data() + src_row, pw,
                pair.labels.data.data() + static_cast<std::size_t>(i) * pw);
  }
  pair.image = Tensor<float>::from_data({ph, pw, c}, std::move(img));
  return pair;
}

namespace {

struct Rgb {
  double r, g, b;
};

// Colours spaced far enough apart that a nearest-colour rule solves the task.
const Rgb kClassColors[3] = {
    {0.10, 0.08, 0.12},  // background / non-tissue
    {0.75, 0.55, 0.70},  // tissue
    {0.45, 0.15, 0.50},  // carcinoma
};

void fill_shape(LabelMap& mask, Rng& rng, int cls) {
  const int h = mask.h, w = mask.w;
  const bool ellipse = rng.uniform() < 0.5;
  const int ci = rng.uniform_int(h / 6, h - 1 - h / 6);
  const int cj = rng.uniform_int(w / 6, w - 1 - w / 6);
  const int ri = rng.uniform_int(std::max(2, h / 8), std::max(3, h / 3));
  const int rj = rng.uniform_int(std::max(2, w / 8), std::max(3, w / 3));
  for (int i = std::max(0, ci - ri); i <= std::min(h - 1, ci + ri); ++i) {
    for (int j = std::max(0, cj - rj); j <= std::min(w - 1, cj + rj); ++j) {
      if (ellipse) {
        const double di = static_cast<double>(i - ci) / ri;
        const double dj = static_cast<double>(j - cj) / rj;
        if (di * di + dj * dj > 1.0) continue;
      }
      mask.data[static_cast<std::size_t>(i) * w + j] = cls;
    }
  }
}

}  // namespace

SampleManifest synth_dataset(const SynthOptions& options, const std::string& out_dir) {
  if (options.classes != 2 && options.classes != 3) {
    throw std::invalid_argument("synth: classes must be 2 or 3");
  }
  if (options.h % 16 != 0 || options.w % 16 != 0) {
    throw std::invalid_argument("synth: size must be divisible by 16");
  }
  if (options.count < 1) throw std::invalid_argument("synth: count must be >= 1");

  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");

  SampleManifest manifest;
  manifest.encoding = options.classes == 3 ? MaskEncoding::orca3 : MaskEncoding::binary;
  manifest.patch_h = options.h;
  manifest.patch_w = options.w;
  manifest.base_dir = root.string();

  Rng rng = Rng(options.seed).fork(0x5331);
  const int train_count =
      std::min(options.count,
               std::max(1, static_cast<int>(std::lround(options.count * options.train_fraction))));

  for (int n = 0; n < options.count; ++n) {
    LabelMap mask;
    mask.h = options.h;
    mask.w = options.w;
    mask.data.assign(static_cast<std::size_t>(options.h) * options.w, 0);
    for (int cls = 1; cls < options.classes; ++cls) {
      const int shapes = rng.uniform_int(1, 3);
      for (int s = 0; s < shapes; ++s) fill_shape(mask, rng, cls);
    }

    ImageU8 image;
    image.h = options.h;
    image.w = options.w;
    image.channels = 3;
    image.pixels.resize(mask.size() * 3);
    for (std::size_t p = 0; p < mask.size(); ++p) {
      const Rgb& base = kClassColors[mask.data[p]];
      const double noise_r = 0.04 * rng.normal();
      const double noise_g = 0.04 * rng.normal();
      const double noise_b = 0.04 * rng.normal();
      const double rgb[3] = {base.r + noise_r, base.g + noise_g, base.b + noise_b};
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(std::max(rgb[c], 0.0), 1.0);
        image.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }

    char name[64];
    std::snprintf(name, sizeof(name), "img_%03d.png", n);
    const std::string image_rel = std::string("images/") + name;
    std::snprintf(name, sizeof(name), "mask_%03d.png", n);
    const std::string mask_rel = std::string("masks/") + name;
    write_png((root / image_rel).string(), image);
    write_png((root / mask_rel).string(), encode_mask(mask, manifest.encoding));

    ManifestEntry entry;
    entry.image_path = image_rel;
    entry.mask_path = mask_rel;
    entry.split = n < train_count ? "train" : "test";
    manifest.entries.push_back(std::move(entry));
  }

  save_manifest(manifest, (root / "manifest.json").string());
  return manifest;
}

}  // namespace ocunet
