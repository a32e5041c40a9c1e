#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocunet/augment.hpp"
#include "ocunet/checkpoint.hpp"
#include "ocunet/dataset.hpp"
#include "ocunet/losses.hpp"
#include "ocunet/metrics.hpp"
#include "ocunet/model.hpp"
#include "ocunet/optimizer.hpp"
#include "ocunet/schedule.hpp"

namespace ocunet {

enum class LossKind { automatic, cce, hybrid };

struct TrainOptions {
  int epochs = 50;
  int max_steps = 0;   // optimizer step cap; 0 = no cap
  int batch_size = 0;  // 0 -> size rule from the patch dimensions
  double lr = 3e-4;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::automatic;  // automatic: binary -> hybrid, multi-class -> cce
  HybridLossConfig hybrid;
  PlateauPolicy plateau;
  EarlyStopPolicy early_stop;
  double val_fraction = 0.1;  // held out of train when the manifest has no val split
  double target_train_dice = 0.0;  // stop once the epoch training Dice reaches this; 0 = off
  AugmentationSpec augment;
  int workers = 1;
  std::size_t cache_budget_bytes = std::size_t(1) << 30;
  std::string log_path;         // per-epoch CSV; empty = no file
  std::string checkpoint_path;  // best checkpoint; empty = keep in memory only
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_dice = 0;  // from the training-mode forwards of this epoch
  double val_dice = 0;
  double val_miou = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_dice = 0;
  double best_train_dice = 0;
  Checkpoint best;
  bool stopped_early = false;
  int steps = 0;
};

/// Full optimization loop: Adam at the configured rate, on-the-fly
/// augmentation, validation after every epoch, ReduceLROnPlateau and early
/// stopping on the validation Dice, best-checkpoint retention, and a
/// deterministic end-to-end path for a fixed seed.
TrainResult train(OCUNet<float>& model, const SampleManifest& manifest,
                  const TrainOptions& options);

/// Deterministic validation holdout from the manifest's train split: the same
/// (fraction, seed) pair always cuts the same entries. At least one entry
/// stays in train; an empty holdout falls back to validating on train itself.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(
    const SampleManifest& manifest, double fraction, std::uint64_t seed);

std::string format_epoch_log(const std::vector<EpochRecord>& history);

/// Confusion counts of a model over one manifest split (patch-wise, eval
/// mode). The monitored Dice is the foreground Dice for binary problems and
/// the macro Dice otherwise.
ConfusionCounts evaluate_split(OCUNet<float>& model, SampleStore& store,
                               const std::vector<std::size_t>& entries);

double monitored_dice(const MetricsReport& report, int num_classes);

/// Argmax labels (or the 0.5 threshold for a single-channel map) from a
/// [H,W,C] or [B,H,W,C] probability tensor.
LabelMap probabilities_to_labels(const Tensor<float>& probs, int batch_index = 0);

}  // namespace ocunet
