#include "ocunet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include "ocunet/autograd.hpp"
#include "ocunet/ops.hpp"

namespace ocunet {

LabelMap probabilities_to_labels(const Tensor<float>& probs, int batch_index) {
  Shape shape = probs.shape();
  int h, w, c;
  std::size_t base = 0;
  if (shape.size() == 4) {
    h = shape[1];
    w = shape[2];
    c = shape[3];
    base = static_cast<std::size_t>(batch_index) * h * w * c;
  } else if (shape.size() == 3) {
    h = shape[0];
    w = shape[1];
    c = shape[2];
  } else {
    throw std::invalid_argument("labels: expected [B,H,W,C] or [H,W,C] probabilities");
  }
  LabelMap out;
  out.h = h;
  out.w = w;
  out.data.resize(static_cast<std::size_t>(h) * w);
  const float* p = probs.data() + base;
  for (std::size_t s = 0; s < out.data.size(); ++s) {
    if (c == 1) {
      out.data[s] = p[s] >= 0.5f ? 1 : 0;
    } else {
      const float* px = p + s * c;
      int best = 0;
      for (int ch = 1; ch < c; ++ch) {
        if (px[ch] > px[best]) best = ch;
      }
      out.data[s] = best;
    }
  }
  return out;
}

double monitored_dice(const MetricsReport& report, int num_classes) {
  if (num_classes == 1 && report.per_class.size() == 2) return report.per_class[1].dice;
  return report.average.dice;
}

namespace {

int confusion_classes(int model_classes) { return model_classes == 1 ? 2 : model_classes; }

struct BatchTensors {
  Tensor<float> images;   // [B,H,W,3]
  Tensor<float> targets;  // [B,H,W,1] or one-hot [B,H,W,C]
  std::vector<LabelMap> labels;
};

BatchTensors stack_batch(const std::vector<PatchPair>& patches, int num_classes) {
  if (patches.empty()) throw std::runtime_error("train: empty batch");
  const int b = static_cast<int>(patches.size());
  const int h = patches[0].image.dim(0);
  const int w = patches[0].image.dim(1);
  const int tc = num_classes == 1 ? 1 : num_classes;
  std::vector<float> images(static_cast<std::size_t>(b) * h * w * 3);
  std::vector<float> targets(static_cast<std::size_t>(b) * h * w * tc, 0.0f);
  BatchTensors out;
  for (int k = 0; k < b; ++k) {
    const auto& patch = patches[k];
    if (patch.image.dim(0) != h || patch.image.dim(1) != w) {
      throw std::runtime_error("train: inconsistent sample dimensions in one batch");
    }
    std::copy_n(patch.image.data(), patch.image.size(),
                images.data() + static_cast<std::size_t>(k) * h * w * 3);
    float* target = targets.data() + static_cast<std::size_t>(k) * h * w * tc;
    const auto& labels = patch.labels.data;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const int cls = labels[s];
      if (cls < 0 || cls >= std::max(2, tc)) {
        throw std::runtime_error("train: label " + std::to_string(cls) +
                                 " outside the model's class range");
      }
      if (tc == 1) {
        target[s] = static_cast<float>(cls);
      } else {
        target[s * tc + cls] = 1.0f;
      }
    }
    out.labels.push_back(patch.labels);
  }
  out.images = Tensor<float>::from_data({b, h, w, 3}, std::move(images));
  out.targets = Tensor<float>::from_data({b, h, w, tc}, std::move(targets));
  return out;
}

std::vector<PatchPair> assemble_patches(SampleStore& store, const std::vector<PatchRef>& refs,
                                        std::size_t begin, std::size_t end,
                                        const TrainOptions& options, std::uint64_t epoch) {
  std::vector<PatchPair> raw;
  raw.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) raw.push_back(store.patch(refs[i]));

  auto transform = [&](std::size_t i, PatchPair&& pair) {
    Rng rng = Rng(options.seed).fork((epoch << 32) ^ (0xA06u + i));
    AugmentationSpec spec = sample_augmentations(options.augment, rng);
    Sample sample{std::move(pair.image), std::move(pair.labels)};
    sample = augment(sample, spec);
    return PatchPair{std::move(sample.image), std::move(sample.labels)};
  };

  std::vector<PatchPair> out(raw.size());
  if (options.workers > 1 && !options.augment.ops.empty()) {
    std::vector<std::future<PatchPair>> futures;
    futures.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      futures.push_back(std::async(std::launch::async, transform, begin + i,
                                   std::move(raw[i])));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) out[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = transform(begin + i, std::move(raw[i]));
  }
  return out;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_val_split(
    const SampleManifest& manifest, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> train_entries = manifest.split_indices("train");
  if (train_entries.empty()) throw std::invalid_argument("train: manifest has no train split");
  Rng shuffle_rng = Rng(seed).fork(0x5A11);
  for (std::size_t i = train_entries.size(); i > 1; --i) {
    std::swap(train_entries[i - 1], train_entries[static_cast<std::size_t>(
                                        shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  std::size_t val_count =
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(train_entries.size())));
  val_count = std::min(val_count, train_entries.size() - 1);
  std::vector<std::size_t> val_entries(train_entries.end() - static_cast<std::ptrdiff_t>(val_count),
                                       train_entries.end());
  train_entries.resize(train_entries.size() - val_count);
  if (val_entries.empty()) val_entries = train_entries;
  return {std::move(train_entries), std::move(val_entries)};
}

ConfusionCounts evaluate_split(OCUNet<float>& model, SampleStore& store,
                               const std::vector<std::size_t>& entries) {
  NoGradGuard no_grad;
  const int classes = confusion_classes(model.config().num_classes);
  ConfusionCounts counts(classes);
  for (const PatchRef& ref : store.patch_index(entries)) {
    PatchPair pair = store.patch(ref);
    const int h = pair.image.dim(0), w = pair.image.dim(1);
    Tensor<float> batch = reshape(pair.image, {1, h, w, 3});
    Tensor<float> probs = model.forward(batch, false);
    counts.merge(confusion(probabilities_to_labels(probs), pair.labels, classes));
  }
  return counts;
}

std::string format_epoch_log(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_dice,val_miou,lr\n";
  char line[160];
  for (const auto& rec : history) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", rec.epoch, rec.train_loss,
                  rec.val_dice, rec.val_miou, rec.lr);
    os << line;
  }
  return os.str();
}

TrainResult train(OCUNet<float>& model, const SampleManifest& manifest,
                  const TrainOptions& options) {
  const int num_classes = model.config().num_classes;
  const int encoding_classes = class_count(manifest.encoding);
  if (!(num_classes == encoding_classes || (num_classes == 1 && encoding_classes == 2))) {
    throw std::invalid_argument("train: model predicts " + std::to_string(num_classes) +
                                " classes but the manifest encoding has " +
                                std::to_string(encoding_classes));
  }

  auto [train_entries, val_entries] = train_val_split(manifest, options.val_fraction,
                                                      options.seed);
  Rng base(options.seed);

  SampleStore store(manifest, options.cache_budget_bytes);
  std::vector<PatchRef> train_refs = store.patch_index(train_entries);
  if (train_refs.empty()) throw std::invalid_argument("train: no training patches");

  const PatchPair probe = store.patch(train_refs[0]);
  const int patch_h = probe.image.dim(0), patch_w = probe.image.dim(1);
  const int batch_size =
      options.batch_size > 0 ? options.batch_size : default_batch_size(patch_h, patch_w);

  LossKind loss_kind = options.loss;
  if (loss_kind == LossKind::automatic) {
    loss_kind = num_classes == 1 ? LossKind::hybrid : LossKind::cce;
  }
  ClassWeights<float> weights = ClassWeights<float>::uniform();
  if (loss_kind == LossKind::hybrid) {
    weights = derive_class_weights(class_frequencies(manifest));
  }

  Adam<float> adam(AdamConfig<float>{static_cast<float>(options.lr)}, model.parameters());
  PlateauScheduler plateau(options.plateau, options.lr);
  EarlyStopMonitor early_stop(options.early_stop);

  TrainResult result;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng order_rng = base.fork(0xE90C + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = train_refs.size(); i > 1; --i) {
      std::swap(train_refs[i - 1], train_refs[static_cast<std::size_t>(order_rng.uniform_int(
                                       0, static_cast<int>(i) - 1))]);
    }

    double loss_sum = 0.0;
    std::size_t loss_samples = 0;
    ConfusionCounts train_counts(confusion_classes(num_classes));
    bool step_cap_hit = false;

    for (std::size_t at = 0; at < train_refs.size(); at += batch_size) {
      const std::size_t end = std::min(at + batch_size, train_refs.size());
      std::vector<PatchPair> patches = assemble_patches(store, train_refs, at, end, options,
                                                        static_cast<std::uint64_t>(epoch));
      BatchTensors batch = stack_batch(patches, num_classes);

      Tensor<float> probs = model.forward(batch.images, true);
      Tensor<float> loss;
      if (loss_kind == LossKind::cce) {
        loss = cce_loss(probs, batch.targets, static_cast<float>(options.hybrid.clamp_eps));
      } else {
        loss = hybrid_loss(options.hybrid, probs, batch.targets, weights);
      }
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(result.steps + 1));
      }
      backward(loss);
      adam.step();
      adam.zero_grad();

      loss_sum += loss_value * static_cast<double>(patches.size());
      loss_samples += patches.size();
      for (std::size_t k = 0; k < patches.size(); ++k) {
        train_counts.merge(confusion(probabilities_to_labels(probs, static_cast<int>(k)),
                                     batch.labels[k], train_counts.num_classes));
      }

      ++result.steps;
      if (options.max_steps > 0 && result.steps >= options.max_steps) {
        step_cap_hit = true;
        break;
      }
    }

    MetricsReport train_report = compute_metrics(train_counts);
    MetricsReport val_report = compute_metrics(evaluate_split(model, store, val_entries));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_samples ? loss_sum / static_cast<double>(loss_samples) : 0.0;
    rec.train_dice = monitored_dice(train_report, num_classes);
    rec.val_dice = monitored_dice(val_report, num_classes);
    rec.val_miou = val_report.miou;
    rec.lr = adam.lr();
    result.history.push_back(rec);
    result.best_train_dice = std::max(result.best_train_dice, rec.train_dice);

    if (result.best_epoch < 0 || rec.val_dice > result.best_val_dice) {
      result.best_epoch = epoch;
      result.best_val_dice = rec.val_dice;
      result.best = snapshot_model(model, &adam);
      result.best.meta.set("train.epoch", std::to_string(epoch));
      result.best.meta.set("train.val_dice", std::to_string(rec.val_dice));
      if (!options.checkpoint_path.empty()) {
        save_checkpoint(options.checkpoint_path, result.best);
      }
    }

    adam.set_lr(static_cast<float>(plateau.update(rec.val_dice)));
    if (early_stop.update(rec.val_dice)) {
      result.stopped_early = true;
      break;
    }
    if (options.target_train_dice > 0.0 && rec.train_dice >= options.target_train_dice) break;
    if (step_cap_hit) break;
  }

  if (!options.log_path.empty()) {
    std::ofstream log(options.log_path);
    if (!log) throw std::runtime_error("train: cannot write log " + options.log_path);
    log << format_epoch_log(result.history);
  }
  return result;
}

}  // namespace ocunet
