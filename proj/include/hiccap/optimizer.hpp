#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "hiccap/layers.hpp"

namespace hiccap {

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // reduce-on-plateau, driven by validation loss
  double factor = 0.5;
  int patience = 2;
  double min_lr = 1e-8;
  int batch_size = 16;
  int epochs = 30;

  void check() const;
};

/// Adam with decoupled weight decay. Parameters that received no gradient in a step
/// (touched == false) are skipped entirely, as are non-trainable buffers.
template <class S>
class AdamW {
 public:
  struct Moments {
    Matrix<S> m, v;
    long step = 0;
  };

  explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg), lr_(cfg.lr) { cfg.check(); }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  const OptimizerConfig& config() const { return cfg_; }

  void step(ParamStore<S>& store) {
    ++steps_;
    const S lr = static_cast<S>(lr_);
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S eps = static_cast<S>(cfg_.eps), wd = static_cast<S>(cfg_.weight_decay);
    for (auto& p : store.params()) {
      if (!p.trainable || !p.touched) continue;
      Moments& st = state_[p.name];
      if (st.m.size() == 0) {
        st.m.setZero(p.value.rows(), p.value.cols());
        st.v.setZero(p.value.rows(), p.value.cols());
      }
      ++st.step;
      p.value *= S(1) - lr * wd;
      st.m = b1 * st.m + (S(1) - b1) * p.grad;
      st.v = b2 * st.v + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
      const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(st.step)));
      const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(st.step)));
      const S step_size = lr / bc1;
      const S bc2_sqrt = std::sqrt(bc2);
      p.value.array() -= step_size * st.m.array() / (st.v.array().sqrt() / bc2_sqrt + eps);
    }
  }

  std::map<std::string, Moments>& moments() { return state_; }
  const std::map<std::string, Moments>& moments() const { return state_; }

 private:
  OptimizerConfig cfg_;
  double lr_;
  long steps_ = 0;
  std::map<std::string, Moments> state_;
};

/// Halves (by `factor`) the learning rate after more than `patience` epochs without a
/// relative improvement of 1e-4 in the monitored loss; never goes below `min_lr`.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(const OptimizerConfig& cfg)
      : factor_(cfg.factor), patience_(cfg.patience), min_lr_(cfg.min_lr) {}

  /// Returns the learning rate to use from now on.
  double observe(double loss, double lr);

  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }
  void restore(double best, int bad_epochs) {
    best_ = best;
    bad_epochs_ = bad_epochs;
  }

 private:
  double factor_;
  int patience_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

}  // namespace hiccap
