#include "ocunet/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ocunet {

ConfusionCounts::ConfusionCounts(int classes)
    : num_classes(classes), tp(classes, 0), fp(classes, 0), fn(classes, 0), tn(classes, 0) {}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.num_classes != num_classes) {
    throw std::invalid_argument("confusion: cannot merge counts with different class counts");
  }
  for (int c = 0; c < num_classes; ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
    tn[c] += other.tn[c];
  }
}

std::uint64_t ConfusionCounts::total() const {
  return num_classes ? tp[0] + fp[0] + fn[0] + tn[0] : 0;
}

ConfusionCounts confusion(const LabelMap& predicted, const LabelMap& truth, int num_classes) {
  if (predicted.h != truth.h || predicted.w != truth.w) {
    throw std::invalid_argument("confusion: prediction and truth dimensions disagree");
  }
  if (num_classes < 1) throw std::invalid_argument("confusion: need at least one class");
  ConfusionCounts counts(num_classes);
  const std::size_t n = truth.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int p = predicted.data[i];
    const int t = truth.data[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes) {
      throw std::invalid_argument("confusion: label out of range [0, " +
                                  std::to_string(num_classes) + ") at pixel " +
                                  std::to_string(i));
    }
    for (int c = 0; c < num_classes; ++c) {
      const bool in_p = (p == c);
      const bool in_t = (t == c);
      if (in_p && in_t) {
        ++counts.tp[c];
      } else if (in_p) {
        ++counts.fp[c];
      } else if (in_t) {
        ++counts.fn[c];
      } else {
        ++counts.tn[c];
      }
    }
  }
  return counts;
}

namespace {

// 0/0 convention: 1.0 when the measured class is missing from both prediction
// and truth, 0.0 when it is missing from exactly one side.
double safe_ratio(std::uint64_t num, std::uint64_t den, bool missing_on_both) {
  if (den != 0) return static_cast<double>(num) / static_cast<double>(den);
  return missing_on_both ? 1.0 : 0.0;
}

}  // namespace

MetricsReport compute_metrics(const ConfusionCounts& counts) {
  MetricsReport report;
  report.per_class.resize(counts.num_classes);
  const std::uint64_t total = counts.total();

  std::uint64_t correct = 0;
  int present = 0;
  for (int c = 0; c < counts.num_classes; ++c) {
    const std::uint64_t tp = counts.tp[c], fp = counts.fp[c], fn = counts.fn[c],
                        tn = counts.tn[c];
    ClassMetrics& m = report.per_class[c];
    m.in_truth = (tp + fn) > 0;
    m.in_pred = (tp + fp) > 0;
    // A zero denominator already implies absence on one side; the flag decides
    // whether the other side is empty too.
    m.dice = safe_ratio(2 * tp, 2 * tp + fp + fn, true);
    m.iou = safe_ratio(tp, tp + fp + fn, true);
    m.sensitivity = safe_ratio(tp, tp + fn, fp == 0);
    m.specificity = safe_ratio(tn, tn + fp, fn == 0);
    m.precision = safe_ratio(tp, tp + fp, fn == 0);
    m.accuracy = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 1.0;
    correct += tp;

    if (m.in_truth) {
      ++present;
      report.average.dice += m.dice;
      report.average.iou += m.iou;
      report.average.sensitivity += m.sensitivity;
      report.average.specificity += m.specificity;
      report.average.precision += m.precision;
      report.average.accuracy += m.accuracy;
    }
  }
  if (present > 0) {
    const double inv = 1.0 / present;
    report.average.dice *= inv;
    report.average.iou *= inv;
    report.average.sensitivity *= inv;
    report.average.specificity *= inv;
    report.average.precision *= inv;
    report.average.accuracy *= inv;
  }
  report.miou = report.average.iou;
  report.overall_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
  return report;
}

namespace {

void append_row(std::ostringstream& os, const std::string& label, const ClassMetrics& m,
                bool extended) {
  os << std::left << std::setw(10) << label << std::right << std::fixed << std::setprecision(4);
  os << std::setw(9) << m.accuracy << std::setw(9) << m.dice << std::setw(9) << m.iou;
  if (extended) {
    os << std::setw(9) << m.sensitivity << std::setw(9) << m.specificity << std::setw(9)
       << m.precision;
  }
  os << '\n';
}

void kv_class(std::ostringstream& os, const std::string& prefix, const ClassMetrics& m) {
  os << std::setprecision(12);
  os << prefix << ".accuracy = " << m.accuracy << '\n';
  os << prefix << ".dice = " << m.dice << '\n';
  os << prefix << ".iou = " << m.iou << '\n';
  os << prefix << ".sensitivity = " << m.sensitivity << '\n';
  os << prefix << ".specificity = " << m.specificity << '\n';
  os << prefix << ".precision = " << m.precision << '\n';
}

}  // namespace

std::string render_metrics_table(const MetricsReport& report, bool extended) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "class" << std::right << std::setw(9) << "acc"
     << std::setw(9) << "dice" << std::setw(9) << "iou";
  if (extended) {
    os << std::setw(9) << "sens" << std::setw(9) << "spec" << std::setw(9) << "prec";
  }
  os << '\n';
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    append_row(os, std::to_string(c), report.per_class[c], extended);
  }
  append_row(os, "average", report.average, extended);
  os << std::fixed << std::setprecision(4);
  os << "miou = " << report.miou << ", overall pixel accuracy = " << report.overall_accuracy
     << '\n';
  return os.str();
}

std::string render_metrics_kv(const MetricsReport& report) {
  std::ostringstream os;
  os << "num_classes = " << report.per_class.size() << '\n';
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    kv_class(os, "class_" + std::to_string(c), report.per_class[c]);
  }
  kv_class(os, "average", report.average);
  os << std::setprecision(12);
  os << "miou = " << report.miou << '\n';
  os << "overall_accuracy = " << report.overall_accuracy << '\n';
  return os.str();
}

}  // namespace ocunet
