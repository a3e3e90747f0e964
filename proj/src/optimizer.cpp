#include "hiccap/optimizer.hpp"

#include <algorithm>

namespace hiccap {

void OptimizerConfig::check() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("optimizer.lr must be >= 0");
  if (!(weight_decay >= 0.0)) fail("optimizer.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("optimizer betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("optimizer.eps must be > 0");
  if (!(factor > 0.0 && factor < 1.0)) fail("optimizer.factor must lie in (0, 1)");
  if (patience < 0) fail("optimizer.patience must be >= 0");
  if (!(min_lr >= 0.0)) fail("optimizer.min_lr must be >= 0");
  if (batch_size < 1) fail("optimizer.batch_size must be >= 1");
  if (epochs < 0) fail("optimizer.epochs must be >= 0");
}

double PlateauScheduler::observe(double loss, double lr) {
  if (loss < best_ * (1.0 - 1e-4) || (best_ == std::numeric_limits<double>::infinity() && std::isfinite(loss))) {
    best_ = loss;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ <= patience_) return lr;
  bad_epochs_ = 0;
  const double reduced = std::max(lr * factor_, min_lr_);
  return std::min(reduced, lr);
}

}  // namespace hiccap
