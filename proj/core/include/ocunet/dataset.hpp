#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocunet/image_io.hpp"
#include "ocunet/losses.hpp"
#include "ocunet/metrics.hpp"
#include "ocunet/random.hpp"
#include "ocunet/tensor.hpp"

namespace ocunet {

/// Mask pixel-intensity schemes. orca3 maps black/gray/white bands to
/// non-tissue / non-carcinoma tissue / carcinoma; binary maps black/white to
/// background / carcinoma.
enum class MaskEncoding { orca3, binary };

int class_count(MaskEncoding encoding);
std::string encoding_name(MaskEncoding encoding);
MaskEncoding encoding_from_name(const std::string& name);

/// Intensity -> class index with +-40 tolerance bands around the nominal
/// codes {0, 128, 255} (orca3) or {0, 255} (binary). Out-of-band intensities
/// raise an error naming `source`.
LabelMap decode_mask(const ImageU8& mask, MaskEncoding encoding, const std::string& source);
ImageU8 encode_mask(const LabelMap& labels, MaskEncoding encoding);

struct ManifestEntry {
  std::string image_path;  // resolved against the manifest directory
  std::string mask_path;
  std::string split;       // "train" or "test"
};

enum class FitMode { patch, resize };

struct SampleManifest {
  MaskEncoding encoding = MaskEncoding::binary;
  int patch_h = 0;  // 0 -> whole image
  int patch_w = 0;
  FitMode fit = FitMode::patch;
  std::vector<ManifestEntry> entries;
  std::string base_dir;

  std::vector<std::size_t> split_indices(const std::string& split) const;
};

/// JSON manifest with encoding, patch geometry, and sample records. Load
/// verifies every referenced file exists and that no image appears in more
/// than one split.
SampleManifest load_manifest(const std::string& path);
void save_manifest(const SampleManifest& manifest, const std::string& path);

struct Sample {
  Tensor<float> image;  // [H,W,3] in [0,1]
  LabelMap labels;
};

Sample load_sample(const ManifestEntry& entry, MaskEncoding encoding,
                   const std::string& base_dir);

/// Bilinear image / nearest-neighbor label resize, used by FitMode::resize
/// and by prediction on arbitrary input sizes.
Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w);
LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w);

struct PatchPair {
  Tensor<float> image;
  LabelMap labels;
};

/// Grid tiling from (0,0) with the given stride; partial border tiles are
/// dropped. Patches stay aligned with their label maps.
std::vector<PatchPair> extract_patches(const Tensor<float>& image, const LabelMap& labels,
                                       int patch_h, int patch_w, int stride_h, int stride_w);

/// Tiles along one axis: floor((size - patch) / stride) + 1, or 0 if the
/// patch does not fit.
int patch_grid_count(int size, int patch, int stride);

/// Paper rule: batch 4 for 640-and-larger patches, 8 otherwise.
int default_batch_size(int patch_h, int patch_w);

/// Per-class pixel fractions over the train split.
std::vector<double> class_frequencies(const SampleManifest& manifest);

/// Inverse-frequency weights normalized to mean 1. Frequencies are floored at
/// 1e-6 before inversion so an absent class keeps a finite (capped) weight.
ClassWeights<float> derive_class_weights(const std::vector<double>& frequencies);

/// One training/evaluation unit: a grid cell of an entry (or the whole image
/// when the manifest has no patch size).
struct PatchRef {
  std::size_t entry = 0;
  int row = 0;
  int col = 0;
};

/// Loads samples on demand, applying FitMode::resize, and keeps decoded
/// samples in memory while they fit the byte budget.
class SampleStore {
 public:
  explicit SampleStore(const SampleManifest& manifest,
                       std::size_t cache_budget_bytes = std::size_t(1) << 30);

  const Sample& get(std::size_t entry_index);
  std::vector<PatchRef> patch_index(const std::vector<std::size_t>& entries);
  PatchPair patch(const PatchRef& ref);
  const SampleManifest& manifest() const { return manifest_; }

 private:
  SampleManifest manifest_;
  std::size_t budget_;
  std::size_t cached_bytes_ = 0;
  std::vector<Sample> cache_;        // slot per entry; empty image = not loaded
  std::vector<bool> loaded_;
};

struct SynthOptions {
  int count = 8;
  int h = 64;
  int w = 64;
  int classes = 2;  // 2 -> binary encoding, 3 -> orca3
  std::uint64_t seed = 0;
  double train_fraction = 0.75;
};

/// Writes `count` image/mask PNG pairs plus manifest.json under `out_dir`.
/// Masks are random filled ellipses and rectangles per class; images colour
/// the classes apart with additive noise so the task is learnable.
/// Deterministic for a fixed seed. Returns the written manifest.
SampleManifest synth_dataset(const SynthOptions& options, const std::string& out_dir);

}  // namespace ocunet
