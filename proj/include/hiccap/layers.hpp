#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "hiccap/autodiff.hpp"
#include "hiccap/rng.hpp"

namespace hiccap {

enum class Mode { Train, Eval };

/// Owns every parameter and buffer of a model; addresses are stable for the store's lifetime.
template <class S>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded by (root rng, name).
  ad::Param<S>& add_uniform(const std::string& name, Index rows, Index cols, Index fan_in, const CounterRng& rng) {
    auto& p = add(name, rows, cols);
    CounterRng r = rng.split(name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>((2.0 * r.uniform() - 1.0) * bound);
    return p;
  }

  ad::Param<S>& add_constant(const std::string& name, Index rows, Index cols, S value, bool trainable = true) {
    auto& p = add(name, rows, cols);
    p.value.setConstant(value);
    p.trainable = trainable;
    return p;
  }

  ad::Param<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const ad::Param<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::deque<ad::Param<S>>& params() { return params_; }
  const std::deque<ad::Param<S>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  ad::Param<S>& add(const std::string& name, Index rows, Index cols) {
    if (index_.count(name)) throw Error(ErrorKind::InvalidConfig, "duplicate parameter " + name);
    index_[name] = params_.size();
    auto& p = params_.emplace_back();
    p.name = name;
    p.value.setZero(rows, cols);
    p.grad.setZero(rows, cols);
    return p;
  }

  std::deque<ad::Param<S>> params_;
  std::map<std::string, std::size_t> index_;
};

template <class S>
struct Linear {
  ad::Param<S>* weight = nullptr;  // in x out
  ad::Param<S>* bias = nullptr;    // 1 x out

  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& name, Index in, Index out, const CounterRng& rng)
      : weight(&store.add_uniform(name + ".weight", in, out, in, rng)),
        bias(&store.add_uniform(name + ".bias", 1, out, in, rng)) {}

  Index in() const { return weight->value.rows(); }
  Index out() const { return weight->value.cols(); }

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x) const {
    return ad::add_row(ad::matmul(x, t.param(*weight)), t.param(*bias));
  }
};

/// Gated LSTM over a whole sequence (gate order i, f, g, o; zero initial state).
/// Returns the T x H hidden-state sequence.
template <class S>
ad::Var<S> lstm_sequence(ad::Var<S> x, ad::Var<S> w_ih, ad::Var<S> w_hh, ad::Var<S> bias) {
  const Index T = x.rows();
  const Index H = w_hh.rows();
  ad::require(w_ih.rows() == x.cols() && w_ih.cols() == 4 * H && w_hh.cols() == 4 * H && bias.cols() == 4 * H,
              "lstm: parameter shapes inconsistent");
  auto sig = [](S z) { return S(1) / (S(1) + std::exp(-z)); };

  Matrix<S> gates(T, 4 * H);  // post-activation
  Matrix<S> cells(T, H);
  Matrix<S> hidden(T, H);
  Matrix<S> pre = x.value() * w_ih.value();
  pre.rowwise() += bias.value().row(0);
  RowVector<S> h = RowVector<S>::Zero(H);
  RowVector<S> c = RowVector<S>::Zero(H);
  for (Index t = 0; t < T; ++t) {
    RowVector<S> z = pre.row(t) + h * w_hh.value();
    for (Index k = 0; k < H; ++k) {
      const S i = sig(z(k));
      const S f = sig(z(H + k));
      const S g = std::tanh(z(2 * H + k));
      const S o = sig(z(3 * H + k));
      c(k) = f * c(k) + i * g;
      h(k) = o * std::tanh(c(k));
      gates(t, k) = i;
      gates(t, H + k) = f;
      gates(t, 2 * H + k) = g;
      gates(t, 3 * H + k) = o;
    }
    cells.row(t) = c;
    hidden.row(t) = h;
  }

  ad::Tape<S>& tape = *x.tape();
  return tape.push(
      std::move(hidden), {x, w_ih, w_hh, bias},
      [x, w_ih, w_hh, bias, gates = std::move(gates), cells = std::move(cells)](int out) {
        return [x, w_ih, w_hh, bias, gates, cells, out](ad::Tape<S>& t) {
          const Index T = gates.rows();
          const Index H = cells.cols();
          const Matrix<S>& hs = t.value(out);
          const Matrix<S>& gout = t.grad(out);
          Matrix<S> dz(T, 4 * H);
          RowVector<S> dh_next = RowVector<S>::Zero(H);
          RowVector<S> dc_next = RowVector<S>::Zero(H);
          for (Index s = T - 1; s >= 0; --s) {
            RowVector<S> dh = gout.row(s) + dh_next;
            for (Index k = 0; k < H; ++k) {
              const S i = gates(s, k), f = gates(s, H + k), g = gates(s, 2 * H + k), o = gates(s, 3 * H + k);
              const S tc = std::tanh(cells(s, k));
              const S c_prev = s > 0 ? cells(s - 1, k) : S(0);
              const S dc = dh(k) * o * (S(1) - tc * tc) + dc_next(k);
              dz(s, k) = dc * g * i * (S(1) - i);
              dz(s, H + k) = dc * c_prev * f * (S(1) - f);
              dz(s, 2 * H + k) = dc * i * (S(1) - g * g);
              dz(s, 3 * H + k) = dh(k) * tc * o * (S(1) - o);
              dc_next(k) = dc * f;
            }
            dh_next = dz.row(s) * w_hh.value().transpose();
          }
          if (t.requires_grad(x.id())) t.accumulate(x.id(), dz * w_ih.value().transpose());
          if (t.requires_grad(w_ih.id())) t.accumulate(w_ih.id(), x.value().transpose() * dz);
          if (t.requires_grad(w_hh.id()) && T > 1)
            t.accumulate(w_hh.id(), hs.topRows(T - 1).transpose() * dz.bottomRows(T - 1));
          if (t.requires_grad(bias.id())) t.accumulate(bias.id(), dz.colwise().sum());
        };
      });
}

template <class S>
struct LstmLayer {
  ad::Param<S>* w_ih = nullptr;
  ad::Param<S>* w_hh = nullptr;
  ad::Param<S>* bias = nullptr;

  LstmLayer() = default;
  LstmLayer(ParamStore<S>& store, const std::string& name, Index in, Index hidden, const CounterRng& rng)
      : w_ih(&store.add_uniform(name + ".w_ih", in, 4 * hidden, in, rng)),
        w_hh(&store.add_uniform(name + ".w_hh", hidden, 4 * hidden, hidden, rng)),
        bias(&store.add_uniform(name + ".bias", 1, 4 * hidden, hidden, rng)) {}

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x) const {
    return lstm_sequence(x, t.param(*w_ih), t.param(*w_hh), t.param(*bias));
  }
};

struct BatchNormConfig {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over rows. Train mode with more than one row normalizes with the
/// batch statistics and updates the running ones; otherwise the running statistics are used.
template <class S>
struct BatchNorm {
  ad::Param<S>* gamma = nullptr;
  ad::Param<S>* beta = nullptr;
  ad::Param<S>* running_mean = nullptr;
  ad::Param<S>* running_var = nullptr;
  BatchNormConfig cfg;

  BatchNorm() = default;
  BatchNorm(ParamStore<S>& store, const std::string& name, Index width, BatchNormConfig c = {})
      : gamma(&store.add_constant(name + ".gamma", 1, width, S(1))),
        beta(&store.add_constant(name + ".beta", 1, width, S(0))),
        running_mean(&store.add_constant(name + ".running_mean", 1, width, S(0), false)),
        running_var(&store.add_constant(name + ".running_var", 1, width, S(1), false)),
        cfg(c) {}

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x, Mode mode) const {
    ad::require(x.cols() == gamma->value.cols(), "batch_norm: width differs");
    ad::Var<S> g = t.param(*gamma);
    ad::Var<S> b = t.param(*beta);
    const Index B = x.rows();
    const S eps = static_cast<S>(cfg.eps);
    if (mode == Mode::Train && B > 1) {
      RowVector<S> mu = x.value().colwise().mean();
      Matrix<S> centered = x.value().rowwise() - mu;
      RowVector<S> var = centered.array().square().colwise().mean().matrix();
      RowVector<S> inv_std = (var.array() + eps).rsqrt().matrix();
      Matrix<S> xhat = centered.array().rowwise() * inv_std.array();
      Matrix<S> y = (xhat.array().rowwise() * g.value().row(0).array()).rowwise() + b.value().row(0).array();

      const S m = static_cast<S>(cfg.momentum);
      running_mean->value = (S(1) - m) * running_mean->value + m * mu;
      running_var->value = (S(1) - m) * running_var->value + m * var * (static_cast<S>(B) / static_cast<S>(B - 1));

      return t.push(std::move(y), {x, g, b}, [x, g, b, xhat = std::move(xhat), inv_std = std::move(inv_std)](int out) {
        return [x, g, b, xhat, inv_std, out](ad::Tape<S>& t) {
          const Matrix<S>& go = t.grad(out);
          const S n = static_cast<S>(go.rows());
          if (t.requires_grad(g.id())) t.accumulate(g.id(), go.cwiseProduct(xhat).colwise().sum());
          if (t.requires_grad(b.id())) t.accumulate(b.id(), go.colwise().sum());
          if (t.requires_grad(x.id())) {
            Matrix<S> dxhat = go.array().rowwise() * g.value().row(0).array();
            RowVector<S> s1 = dxhat.colwise().sum();
            RowVector<S> s2 = dxhat.cwiseProduct(xhat).colwise().sum();
            Matrix<S> dx = (n * dxhat).rowwise() - s1;
            dx -= (xhat.array().rowwise() * s2.array()).matrix();
            dx = (dx.array().rowwise() * (inv_std.array() / n)).matrix();
            t.accumulate(x.id(), dx);
          }
        };
      });
    }
    RowVector<S> inv_std = (running_var->value.row(0).array() + eps).rsqrt().matrix();
    Matrix<S> xhat = (x.value().rowwise() - running_mean->value.row(0)).array().rowwise() * inv_std.array();
    Matrix<S> y = (xhat.array().rowwise() * g.value().row(0).array()).rowwise() + b.value().row(0).array();
    return t.push(std::move(y), {x, g, b}, [x, g, b, xhat = std::move(xhat), inv_std = std::move(inv_std)](int out) {
      return [x, g, b, xhat, inv_std, out](ad::Tape<S>& t) {
        const Matrix<S>& go = t.grad(out);
        if (t.requires_grad(g.id())) t.accumulate(g.id(), go.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(b.id())) t.accumulate(b.id(), go.colwise().sum());
        if (t.requires_grad(x.id()))
          t.accumulate(x.id(), (go.array().rowwise() * (g.value().row(0).array() * inv_std.array())).matrix());
      };
    });
  }
};

/// affine -> BN -> ReLU -> affine -> BN -> ReLU -> affine
template <class S>
struct MlpBlock {
  Linear<S> fc1, fc2, fc3;
  BatchNorm<S> bn1, bn2;

  MlpBlock() = default;
  MlpBlock(ParamStore<S>& store, const std::string& name, const std::vector<Index>& widths, const CounterRng& rng,
           BatchNormConfig bn = {}) {
    if (widths.size() != 4) throw Error(ErrorKind::InvalidConfig, name + ": MLP block needs 4 widths");
    for (Index w : widths)
      if (w < 1) throw Error(ErrorKind::InvalidConfig, name + ": widths must be >= 1");
    fc1 = Linear<S>(store, name + ".fc1", widths[0], widths[1], rng);
    bn1 = BatchNorm<S>(store, name + ".bn1", widths[1], bn);
    fc2 = Linear<S>(store, name + ".fc2", widths[1], widths[2], rng);
    bn2 = BatchNorm<S>(store, name + ".bn2", widths[2], bn);
    fc3 = Linear<S>(store, name + ".fc3", widths[2], widths[3], rng);
  }

  Index in() const { return fc1.in(); }
  Index out() const { return fc3.out(); }

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x, Mode mode) const {
    ad::require(x.cols() == in(), "mlp_block: input width differs");
    auto h = ad::relu(bn1(t, fc1(t, x), mode));
    h = ad::relu(bn2(t, fc2(t, h), mode));
    return fc3(t, h);
  }
};

/// Default hidden widths [in, in/2, in/4, out], never below 1.
inline std::vector<Index> default_mlp_widths(Index in, Index out) {
  return {in, std::max<Index>(1, in / 2), std::max<Index>(1, in / 4), out};
}

}  // namespace hiccap
