// Command-line front end: synth-data, train, eval, predict, gradcheck.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ocunet/augment.hpp"
#include "ocunet/checkpoint.hpp"
#include "ocunet/dataset.hpp"
#include "ocunet/gradcheck.hpp"
#include "ocunet/image_io.hpp"
#include "ocunet/kv.hpp"
#include "ocunet/metrics.hpp"
#include "ocunet/model.hpp"
#include "ocunet/trainer.hpp"

namespace fs = std::filesystem;
using namespace ocunet;

namespace {

struct CommonArgs {
  std::string manifest_path;
  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

std::pair<int, int> parse_hw(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    const int v = std::stoi(text);
    return {v, v};
  }
  return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
}

// Effective configuration: defaults, overwritten by the config file,
// overwritten by explicit command-line flags.
KvDoc effective_config(const CLI::App& cmd, const std::string& config_path,
                       const KvDoc& defaults,
                       const std::vector<std::pair<std::string, std::string>>& flag_values) {
  KvDoc doc = defaults;
  if (!config_path.empty()) {
    const KvDoc file_doc = KvDoc::load_file(config_path);
    for (const auto& [k, v] : file_doc.items()) doc.set(k, v);
  }
  for (const auto& [flag, key] : flag_values) {
    if (cmd.count(flag) > 0) {
      doc.set(key, cmd[flag]->as<std::string>());
    }
  }
  return doc;
}

ModelConfig model_config_from(const KvDoc& doc) {
  ModelConfig config = ModelConfig::from_kv(doc);
  config.validate();
  return config;
}

TrainOptions train_options_from(const KvDoc& doc) {
  TrainOptions options;
  options.epochs = std::stoi(doc.get_or("epochs", "50"));
  options.max_steps = std::stoi(doc.get_or("max_steps", "0"));
  options.batch_size = std::stoi(doc.get_or("batch_size", "0"));
  options.lr = std::stod(doc.get_or("lr", "0.0003"));
  options.seed = std::stoull(doc.get_or("seed", "0"));
  options.val_fraction = std::stod(doc.get_or("val_fraction", "0.1"));
  options.workers = std::stoi(doc.get_or("workers", "1"));
  options.hybrid.alpha = std::stod(doc.get_or("alpha", "0.5"));
  options.hybrid.symmetric_wbce = doc.get_or("symmetric_wbce", "0") == "1";
  options.hybrid.dice_smooth = std::stod(doc.get_or("dice_smooth", "1e-6"));
  options.hybrid.clamp_eps = std::stod(doc.get_or("clamp_eps", "1e-7"));
  options.plateau.factor = std::stod(doc.get_or("plateau_factor", "0.5"));
  options.plateau.patience = std::stoi(doc.get_or("plateau_patience", "5"));
  options.plateau.min_lr = std::stod(doc.get_or("min_lr", "1e-6"));
  options.plateau.threshold = std::stod(doc.get_or("improvement_threshold", "1e-4"));
  options.early_stop.patience = std::stoi(doc.get_or("early_stop_patience", "15"));
  options.early_stop.threshold = options.plateau.threshold;
  const std::string loss = doc.get_or("loss", "auto");
  if (loss == "cce") {
    options.loss = LossKind::cce;
  } else if (loss == "hybrid") {
    options.loss = LossKind::hybrid;
  } else if (loss != "auto") {
    throw std::invalid_argument("config: loss must be auto, cce, or hybrid");
  }
  options.augment = parse_augmentation_ops(doc.get_or("augment", "none"));
  options.augment.blur_sigma = std::stod(doc.get_or("blur_sigma", "1"));
  options.augment.sharpen_amount = std::stod(doc.get_or("sharpen_amount", "1"));
  return options;
}

void echo_config(const KvDoc& doc) {
  std::cout << "## effective configuration\n" << doc.dump() << "##\n";
}

int cmd_train(const CommonArgs& args, const CLI::App& cmd) {
  SampleManifest manifest = load_manifest(args.manifest_path);

  KvDoc defaults;
  defaults.set("seed", "0");
  defaults.set("lr", "0.0003");
  KvDoc doc = effective_config(cmd, args.config_path, defaults,
                               {{"--seed", "seed"},
                                {"--epochs", "epochs"},
                                {"--batch-size", "batch_size"},
                                {"--lr", "lr"},
                                {"--alpha", "alpha"},
                                {"--classes", "num_classes"}});
  if (cmd.count("--patch-size") > 0) {
    const auto [h, w] = parse_hw(cmd["--patch-size"]->as<std::string>());
    manifest.patch_h = h;
    manifest.patch_w = w;
  }

  // Model geometry follows the training patch size; class count follows the
  // mask encoding unless overridden.
  if (!doc.contains("num_classes")) {
    doc.set("num_classes", manifest.encoding == MaskEncoding::binary ? "1" : "3");
  }
  if (!doc.contains("input_h")) {
    int h = manifest.patch_h, w = manifest.patch_w;
    if (h <= 0) {
      const auto train = manifest.split_indices("train");
      if (train.empty()) throw std::runtime_error("train: manifest has no train split");
      Sample first = load_sample(manifest.entries[train[0]], manifest.encoding,
                                 manifest.base_dir);
      h = first.image.dim(0);
      w = first.image.dim(1);
    }
    doc.set("input_h", std::to_string(h));
    doc.set("input_w", std::to_string(w));
  }
  echo_config(doc);

  ModelConfig config = model_config_from(doc);
  TrainOptions options = train_options_from(doc);
  fs::create_directories(args.out_dir);
  options.log_path = (fs::path(args.out_dir) / "train_log.csv").string();
  options.checkpoint_path = (fs::path(args.out_dir) / "best.ckpt").string();

  OCUNet<float> model(config, options.seed);
  std::cout << "model parameters: " << model.param_count() << "\n";
  TrainResult result = train(model, manifest, options);

  std::cout << "epochs run: " << result.history.size() << ", steps: " << result.steps
            << (result.stopped_early ? " (early stop)" : "") << "\n";
  std::cout << "best epoch " << result.best_epoch << ", validation dice "
            << result.best_val_dice << "\n";
  std::cout << "checkpoint: " << options.checkpoint_path << "\n";
  std::cout << "epoch log:  " << options.log_path << "\n";

  // Final validation metrics from the best checkpoint over the held-out part.
  OCUNet<float> best = model_from_checkpoint(result.best);
  SampleStore store(manifest);
  auto [train_entries, val_entries] = train_val_split(manifest, options.val_fraction,
                                                      options.seed);
  (void)train_entries;
  MetricsReport report = compute_metrics(evaluate_split(best, store, val_entries));
  std::cout << render_metrics_table(report, best.config().num_classes == 1);
  return 0;
}

int cmd_eval(const CommonArgs& args, const CLI::App& cmd) {
  SampleManifest manifest = load_manifest(args.manifest_path);
  Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  OCUNet<float> model = model_from_checkpoint(ckpt);

  const int model_classes = model.config().num_classes;
  const int data_classes = class_count(manifest.encoding);
  if (!(model_classes == data_classes || (model_classes == 1 && data_classes == 2))) {
    throw std::runtime_error("eval: checkpoint predicts " + std::to_string(model_classes) +
                             " classes but the manifest encoding has " +
                             std::to_string(data_classes));
  }

  const std::string split = cmd.count("--split") ? cmd["--split"]->as<std::string>() : "test";
  const auto entries = manifest.split_indices(split);
  if (entries.empty()) throw std::runtime_error("eval: no entries in split '" + split + "'");

  SampleStore store(manifest);
  MetricsReport report = compute_metrics(evaluate_split(model, store, entries));
  const std::string table = render_metrics_table(report, model_classes == 1);
  std::cout << table;

  fs::create_directories(args.out_dir);
  std::ofstream((fs::path(args.out_dir) / "metrics.txt").string()) << table;
  std::ofstream((fs::path(args.out_dir) / "metrics.kv").string())
      << render_metrics_kv(report);
  std::cout << "reports written to " << args.out_dir << "\n";
  return 0;
}

ImageU8 quantize_prob_map(const Tensor<float>& probs, int channel) {
  ImageU8 out;
  out.h = probs.dim(0);
  out.w = probs.dim(1);
  out.channels = 1;
  const int c = probs.dim(2);
  out.pixels.resize(static_cast<std::size_t>(out.h) * out.w);
  const float* p = probs.data();
  for (std::size_t s = 0; s < out.pixels.size(); ++s) {
    out.pixels[s] = static_cast<std::uint8_t>(std::lround(255.0f * p[s * c + channel]));
  }
  return out;
}

// Carcinoma probability as a red-to-yellow layer at 50% opacity.
ImageU8 overlay_heat(const ImageU8& source, const Tensor<float>& probs, int channel) {
  ImageU8 out;
  out.h = source.h;
  out.w = source.w;
  out.channels = 3;
  out.pixels.resize(static_cast<std::size_t>(out.h) * out.w * 3);
  const int c = probs.dim(2);
  const float* p = probs.data();
  for (std::size_t s = 0; s < static_cast<std::size_t>(out.h) * out.w; ++s) {
    const float heat = p[s * c + channel];
    const float ramp[3] = {255.0f, 255.0f * heat, 0.0f};
    for (int ch = 0; ch < 3; ++ch) {
      const float src = source.channels == 1 ? source.pixels[s] : source.pixels[s * 3 + ch];
      out.pixels[s * 3 + ch] =
          static_cast<std::uint8_t>(std::lround(0.5f * src + 0.5f * ramp[ch]));
    }
  }
  return out;
}

int cmd_predict(const CommonArgs& args, const CLI::App& cmd) {
  SampleManifest manifest = load_manifest(args.manifest_path);
  Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  OCUNet<float> model = model_from_checkpoint(ckpt);
  const ModelConfig& config = model.config();

  std::string split = cmd.count("--split") ? cmd["--split"]->as<std::string>() : "test";
  auto entries = manifest.split_indices(split);
  if (entries.empty()) entries = manifest.split_indices(split == "test" ? "train" : "test");
  if (entries.empty()) throw std::runtime_error("predict: manifest has no entries");

  fs::create_directories(args.out_dir);
  const int classes = config.num_classes == 1 ? 2 : config.num_classes;
  int written = 0, failed = 0;
  NoGradGuard no_grad;
  for (std::size_t idx : entries) {
    const auto& entry = manifest.entries[idx];
    const std::string image_path = (fs::path(manifest.base_dir) / entry.image_path).string();
    ImageU8 raw;
    try {
      raw = read_png(image_path);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << image_path << ": " << e.what() << "\n";
      ++failed;
      continue;
    }

    std::vector<float> values(static_cast<std::size_t>(raw.h) * raw.w * 3);
    for (std::size_t s = 0; s < static_cast<std::size_t>(raw.h) * raw.w; ++s) {
      for (int ch = 0; ch < 3; ++ch) {
        const std::uint8_t v = raw.channels == 1 ? raw.pixels[s] : raw.pixels[s * 3 + ch];
        values[s * 3 + ch] = static_cast<float>(v) / 255.0f;
      }
    }
    Tensor<float> image = Tensor<float>::from_data({raw.h, raw.w, 3}, std::move(values));
    if (raw.h != config.input_h || raw.w != config.input_w) {
      image = resize_bilinear(image, config.input_h, config.input_w);
    }
    Tensor<float> probs =
        model.forward(reshape(image, {1, config.input_h, config.input_w, 3}), false);
    probs = reshape(probs, {config.input_h, config.input_w, config.num_classes});
    // Expand a sigmoid head to explicit background/foreground planes.
    if (config.num_classes == 1) {
      std::vector<float> two(static_cast<std::size_t>(config.input_h) * config.input_w * 2);
      const float* p = probs.data();
      for (std::size_t s = 0; s < two.size() / 2; ++s) {
        two[s * 2] = 1.0f - p[s];
        two[s * 2 + 1] = p[s];
      }
      probs = Tensor<float>::from_data({config.input_h, config.input_w, 2}, std::move(two));
    }
    if (probs.dim(0) != raw.h || probs.dim(1) != raw.w) {
      probs = resize_bilinear(probs, raw.h, raw.w);
    }

    const std::string stem = fs::path(entry.image_path).stem().string();
    LabelMap labels = probabilities_to_labels(probs);
    write_png((fs::path(args.out_dir) / (stem + "_mask.png")).string(),
              encode_mask(labels, manifest.encoding));
    for (int c = 0; c < classes; ++c) {
      write_png((fs::path(args.out_dir) / (stem + "_prob_class" + std::to_string(c) + ".png"))
                    .string(),
                quantize_prob_map(probs, c));
    }
    write_png((fs::path(args.out_dir) / (stem + "_overlay.png")).string(),
              overlay_heat(raw, probs, classes - 1));
    ++written;
  }
  std::cout << "predictions for " << written << " image(s) in " << args.out_dir << "\n";
  return written > 0 ? 0 : 1;
}

int cmd_gradcheck(const CommonArgs& args, const std::string& fault_unit) {
  GradCheckOptions options;
  if (args.seed != 0) options.seed = args.seed;
  const auto results = run_gradient_checks(options, fault_unit);
  std::cout << render_gradcheck_report(results);
  const bool ok = gradcheck_all_passed(results);
  std::cout << (ok ? "all gradient checks passed" : "gradient checks FAILED") << "\n";
  return ok ? 0 : 1;
}

int cmd_synth(const CommonArgs& args, const CLI::App& cmd) {
  SynthOptions options;
  options.seed = args.seed;
  if (cmd.count("--count")) options.count = cmd["--count"]->as<int>();
  if (cmd.count("--classes")) options.classes = cmd["--classes"]->as<int>();
  if (cmd.count("--size")) {
    const auto [h, w] = parse_hw(cmd["--size"]->as<std::string>());
    options.h = h;
    options.w = w;
  }
  if (cmd.count("--train-fraction")) {
    options.train_fraction = cmd["--train-fraction"]->as<double>();
  }
  synth_dataset(options, args.out_dir);
  std::cout << (fs::path(args.out_dir) / "manifest.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OCU-Net semantic segmentation toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string fault_unit;

  auto add_common = [&](CLI::App* cmd, bool manifest, bool checkpoint) {
    if (manifest) cmd->add_option("--manifest", args.manifest_path, "dataset manifest")->required();
    if (checkpoint) {
      cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint file")->required();
    }
    cmd->add_option("--config", args.config_path, "key = value configuration file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "random seed");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  add_common(train_cmd, true, false);
  train_cmd->add_option("--epochs", "epoch budget");
  train_cmd->add_option("--batch-size", "samples per optimizer step");
  train_cmd->add_option("--lr", "Adam learning rate (default 3e-4)");
  train_cmd->add_option("--alpha", "hybrid loss WBCE weight");
  train_cmd->add_option("--classes", "number of output classes");
  train_cmd->add_option("--patch-size", "training patch HxW, overrides the manifest");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, true, true);
  eval_cmd->add_option("--split", "manifest split to evaluate (default test)");

  CLI::App* predict_cmd = app.add_subcommand("predict", "export masks, heatmaps, overlays");
  add_common(predict_cmd, true, true);
  predict_cmd->add_option("--split", "manifest split to predict (default test)");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference self check");
  grad_cmd->add_option("--seed", args.seed, "random seed");
  grad_cmd->add_option("--inject-fault", fault_unit,
                       "negate the named unit's gradients (harness self test)");

  CLI::App* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic dataset");
  synth_cmd->add_option("--out", args.out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", args.seed, "random seed");
  synth_cmd->add_option("--count", "number of image/mask pairs");
  synth_cmd->add_option("--size", "image HxW (divisible by 16)");
  synth_cmd->add_option("--classes", "2 (binary) or 3 (orca3)");
  synth_cmd->add_option("--train-fraction", "fraction of samples in the train split");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(args, *train_cmd);
    if (eval_cmd->parsed()) return cmd_eval(args, *eval_cmd);
    if (predict_cmd->parsed()) return cmd_predict(args, *predict_cmd);
    if (grad_cmd->parsed()) return cmd_gradcheck(args, fault_unit);
    if (synth_cmd->parsed()) return cmd_synth(args, *synth_cmd);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
