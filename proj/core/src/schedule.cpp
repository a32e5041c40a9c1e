#include "ocunet/schedule.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace ocunet {

PlateauScheduler::PlateauScheduler(const PlateauPolicy& policy, double initial_lr)
    : policy_(policy), lr_(initial_lr), best_(-std::numeric_limits<double>::infinity()) {
  if (!(policy.factor > 0.0 && policy.factor < 1.0)) {
    throw std::invalid_argument("plateau: factor must lie in (0, 1)");
  }
  if (policy.patience < 1) throw std::invalid_argument("plateau: patience must be >= 1");
}

double PlateauScheduler::update(double metric) {
  if (metric > best_ + policy_.threshold) {
    best_ = metric;
    stale_ = 0;
    return lr_;
  }
  if (++stale_ >= policy_.patience) {
    lr_ = std::max(lr_ * policy_.factor, policy_.min_lr);
    stale_ = 0;
  }
  return lr_;
}

EarlyStopMonitor::EarlyStopMonitor(const EarlyStopPolicy& policy)
    : policy_(policy), best_(-std::numeric_limits<double>::infinity()) {
  if (policy.patience < 1) throw std::invalid_argument("early stop: patience must be >= 1");
}

bool EarlyStopMonitor::update(double metric) {
  ++epoch_;
  if (metric > best_ + policy_.threshold) {
    best_ = metric;
    best_epoch_ = epoch_;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= policy_.patience;
}

}  // namespace ocunet
