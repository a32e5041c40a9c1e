#pragma once

namespace ocunet {

/// Halving-style learning-rate reduction after `patience` consecutive epochs
/// without the monitored metric (validation Dice) improving by at least
/// `threshold`. The rate never increases and never drops below `min_lr`.
struct PlateauPolicy {
  double factor = 0.5;
  int patience = 5;
  double min_lr = 1e-6;
  double threshold = 1e-4;
};

class PlateauScheduler {
 public:
  PlateauScheduler(const PlateauPolicy& policy, double initial_lr);

  /// Feeds one epoch's metric; returns the learning rate to use next.
  double update(double metric);
  double lr() const { return lr_; }

 private:
  PlateauPolicy policy_;
  double lr_;
  double best_;
  int stale_ = 0;
};

/// Stops after `patience` consecutive non-improving epochs.
struct EarlyStopPolicy {
  int patience = 15;
  double threshold = 1e-4;
};

class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(const EarlyStopPolicy& policy);

  /// Feeds one epoch's metric; returns true when training should stop.
  bool update(double metric);
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  EarlyStopPolicy policy_;
  double best_;
  int best_epoch_ = -1;
  int epoch_ = -1;
  int stale_ = 0;
};

}  // namespace ocunet
