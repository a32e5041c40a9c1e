#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ocunet {

/// Per-pixel class indices for an h x w mask.
struct LabelMap {
  int h = 0;
  int w = 0;
  std::vector<int> data;  // row-major, size h * w

  std::size_t size() const { return data.size(); }
};

/// One-vs-rest pixel tallies per class. TP+FP+FN+TN equals the pixel count
/// for every class; counts from independent images merge by addition.
struct ConfusionCounts {
  int num_classes = 0;
  std::vector<std::uint64_t> tp, fp, fn, tn;

  explicit ConfusionCounts(int classes = 0);
  void merge(const ConfusionCounts& other);
  std::uint64_t total() const;
};

/// Tallies prediction vs truth; label values must lie in [0, num_classes).
ConfusionCounts confusion(const LabelMap& predicted, const LabelMap& truth, int num_classes);

struct ClassMetrics {
  double dice = 0, iou = 0, sensitivity = 0, specificity = 0, precision = 0, accuracy = 0;
  bool in_truth = false;  // class has pixels in the ground truth
  bool in_pred = false;
};

/// All per-class metrics plus macro averages. For a 0/0 ratio the value is
/// 1.0 when the class is absent from both prediction and truth and 0.0 when
/// absent from exactly one; macro averages skip classes absent from truth.
struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics average;
  double miou = 0;              // mean per-class IoU over classes present in truth
  double overall_accuracy = 0;  // micro: correctly labelled pixels / all pixels
};

MetricsReport compute_metrics(const ConfusionCounts& counts);

/// Fixed-width table with one row per class plus the average row. Binary
/// problems include the sensitivity/specificity/precision columns.
std::string render_metrics_table(const MetricsReport& report, bool extended);

/// Machine-readable "key = value" rendering of the same report.
std::string render_metrics_kv(const MetricsReport& report);

}  // namespace ocunet
