#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records one forward pass. Every op pushes a node holding its value and,
// when any input needs a gradient, a closure that scatters the node's gradient
// into its inputs. Parameters enter as leaves that accumulate into Param::grad.

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hiccap/error.hpp"
#include "hiccap/tensor.hpp"

namespace hiccap::ad {

template <class S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  bool trainable = true;
  bool touched = false;  // received a gradient since the last zero_grad

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
    touched = false;
  }
};

template <class S>
class Tape;

template <class S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<S>& value() const { return tape_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  S scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape<S>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

template <class S>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  /// With record=false no closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<S> constant(Matrix<S> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Leaf bound to a parameter; repeated uses on one tape share a single node.
  Var<S> param(Param<S>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<S>(this, it->second);
    const bool needs = record_ && p.trainable;
    nodes_.push_back(Node{p.value, {}, {}, needs});
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (needs) {
      Param<S>* target = &p;
      nodes_.back().backward = [target, id](Tape& t) {
        const Matrix<S>& g = t.grad(id);
        if (target->grad.size() != g.size()) target->grad.setZero(g.rows(), g.cols());
        target->grad += g;
        target->touched = true;
      };
    }
    param_nodes_.emplace(&p, id);
    return Var<S>(this, id);
  }

  /// Records an op result. `make_backward` is only invoked when a parent needs a gradient;
  /// it receives the new node's id.
  template <class MakeBackward>
  Var<S> push(Matrix<S> value, std::initializer_list<Var<S>> parents, MakeBackward&& make_backward) {
    bool needs = false;
    if (record_)
      for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, {}, needs});
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (needs) nodes_.back().backward = make_backward(id);
    return Var<S>(this, id);
  }

  Var<S> push_multi(Matrix<S> value, std::span<const Var<S>> parents, std::function<Backward(int)> make_backward) {
    bool needs = false;
    if (record_)
      for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, {}, needs});
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (needs) nodes_.back().backward = make_backward(id);
    return Var<S>(this, id);
  }

  const Matrix<S>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient of node `id`; zero-initialized on first access.
  Matrix<S>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <class Expr>
  void accumulate(int id, const Expr& g) {
    if (!nodes_[id].requires_grad) return;
    Node& n = nodes_[id];
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Backpropagates from a 1x1 node.
  void backward(const Var<S>& root) {
    if (root.rows() != 1 || root.cols() != 1)
      throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar root");
    if (!nodes_[root.id()].requires_grad) return;
    grad(root.id()).setConstant(S(1));
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    Backward backward;
    bool requires_grad;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Param<S>*, int> param_nodes_;
  bool record_;
};

inline void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

// --- linear algebra -------------------------------------------------------

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape<S>& t = *a.tape();
  return t.push(a.value() * b.value(), {a, b}, [a, b](int out) {
    return [a, b, out](Tape<S>& t) {
      const Matrix<S>& g = t.grad(out);
      if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value().transpose());
      if (t.requires_grad(b.id())) t.accumulate(b.id(), a.value().transpose() * g);
    };
  });
}

/// a * b^T
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  require(a.cols() == b.cols(), "matmul_nt: widths differ");
  Tape<S>& t = *a.tape();
  return t.push(a.value() * b.value().transpose(), {a, b}, [a, b](int out) {
    return [a, b, out](Tape<S>& t) {
      const Matrix<S>& g = t.grad(out);
      if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value());
      if (t.requires_grad(b.id())) t.accumulate(b.id(), g.transpose() * a.value());
    };
  });
}

template <class S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape();
  return t.push(Matrix<S>(a.value().transpose()), {a}, [a](int out) {
    return [a, out](Tape<S>& t) { t.accumulate(a.id(), t.grad(out).transpose()); };
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  Tape<S>& t = *a.tape();
  return t.push(a.value() + b.value(), {a, b}, [a, b](int out) {
    return [a, b, out](Tape<S>& t) {
      t.accumulate(a.id(), t.grad(out));
      t.accumulate(b.id(), t.grad(out));
    };
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
  Tape<S>& t = *a.tape();
  return t.push(a.value() - b.value(), {a, b}, [a, b](int out) {
    return [a, b, out](Tape<S>& t) {
      t.accumulate(a.id(), t.grad(out));
      t.accumulate(b.id(), -t.grad(out));
    };
  });
}

/// a + row, broadcasting a 1 x n row over every row of a.
template <class S>
Var<S> add_row(Var<S> a, Var<S> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias width differs");
  Tape<S>& t = *a.tape();
  Matrix<S> v = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(v), {a, row}, [a, row](int out) {
    return [a, row, out](Tape<S>& t) {
      t.accumulate(a.id(), t.grad(out));
      if (t.requires_grad(row.id())) t.accumulate(row.id(), t.grad(out).colwise().sum());
    };
  });
}

template <class S>
Var<S> scale(Var<S> a, S s) {
  Tape<S>& t = *a.tape();
  return t.push(Matrix<S>(a.value() * s), {a}, [a, s](int out) {
    return [a, s, out](Tape<S>& t) { t.accumulate(a.id(), t.grad(out) * s); };
  });
}

/// Elementwise product.
template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shapes differ");
  Tape<S>& t = *a.tape();
  return t.push(Matrix<S>(a.value().cwiseProduct(b.value())), {a, b}, [a, b](int out) {
    return [a, b, out](Tape<S>& t) {
      const Matrix<S>& g = t.grad(out);
      if (t.requires_grad(a.id())) t.accumulate(a.id(), g.cwiseProduct(b.value()));
      if (t.requires_grad(b.id())) t.accumulate(b.id(), g.cwiseProduct(a.value()));
    };
  });
}

// --- pointwise nonlinearities -------------------------------------------

template <class S>
Var<S> tanh(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> y = a.value().array().tanh().matrix();
  return t.push(std::move(y), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      const Matrix<S>& y = t.value(out);
      t.accumulate(a.id(), t.grad(out).cwiseProduct((S(1) - y.array().square()).matrix()));
    };
  });
}

template <class S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> y = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return t.push(std::move(y), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      const Matrix<S>& y = t.value(out);
      t.accumulate(a.id(), t.grad(out).cwiseProduct((y.array() * (S(1) - y.array())).matrix()));
    };
  });
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> y = a.value().cwiseMax(S(0));
  return t.push(std::move(y), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      Matrix<S> mask = (a.value().array() > S(0)).template cast<S>().matrix();
      t.accumulate(a.id(), t.grad(out).cwiseProduct(mask));
    };
  });
}

template <class S>
S softplus_value(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <class S>
Var<S> softplus(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> y = a.value().unaryExpr([](S x) { return softplus_value(x); });
  return t.push(std::move(y), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      Matrix<S> s = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
      t.accumulate(a.id(), t.grad(out).cwiseProduct(s));
    };
  });
}

// --- softmax family --------------------------------------------------------

template <class S>
Matrix<S> softmax_rows_value(const Matrix<S>& x) {
  Matrix<S> y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const S m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

template <class S>
Var<S> softmax_rows(Var<S> a) {
  Tape<S>& t = *a.tape();
  return t.push(softmax_rows_value(a.value()), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      const Matrix<S>& y = t.value(out);
      const Matrix<S>& g = t.grad(out);
      Matrix<S> dot = g.cwiseProduct(y).rowwise().sum();
      Matrix<S> gx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
      t.accumulate(a.id(), gx);
    };
  });
}

/// log(sum(exp(a))) over every entry, as a 1x1.
template <class S>
Var<S> logsumexp_all(Var<S> a) {
  Tape<S>& t = *a.tape();
  const S m = a.value().maxCoeff();
  const S lse = m + std::log((a.value().array() - m).exp().sum());
  Matrix<S> v(1, 1);
  v(0, 0) = lse;
  return t.push(std::move(v), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      const S g = t.grad(out)(0, 0);
      const S lse = t.value(out)(0, 0);
      t.accumulate(a.id(), ((a.value().array() - lse).exp() * g).matrix());
    };
  });
}

/// Mean cross-entropy of row-wise softmax(logits) against integer class targets.
template <class S>
Var<S> softmax_cross_entropy(Var<S> logits, std::vector<int> targets) {
  require(static_cast<Index>(targets.size()) == logits.rows(), "cross entropy: target count differs");
  Tape<S>& t = *logits.tape();
  Matrix<S> p = softmax_rows_value(logits.value());
  S loss = 0;
  for (Index i = 0; i < p.rows(); ++i) {
    require(targets[i] >= 0 && targets[i] < p.cols(), "cross entropy: target out of range");
    const S m = logits.value().row(i).maxCoeff();
    const S lse = m + std::log((logits.value().row(i).array() - m).exp().sum());
    loss += lse - logits.value()(i, targets[i]);
  }
  loss /= static_cast<S>(p.rows());
  Matrix<S> v(1, 1);
  v(0, 0) = loss;
  return t.push(std::move(v), {logits}, [logits, p = std::move(p), targets = std::move(targets)](int out) {
    return [logits, p, targets, out](Tape<S>& t) {
      const S g = t.grad(out)(0, 0) / static_cast<S>(p.rows());
      Matrix<S> gx = p;
      for (Index i = 0; i < gx.rows(); ++i) gx(i, targets[i]) -= S(1);
      t.accumulate(logits.id(), gx * g);
    };
  });
}

// --- reductions and reshaping -------------------------------------------

template <class S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> v(1, 1);
  v(0, 0) = a.value().sum();
  return t.push(std::move(v), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      t.accumulate(a.id(), Matrix<S>::Constant(a.rows(), a.cols(), t.grad(out)(0, 0)));
    };
  });
}

/// Main diagonal of a square matrix as a 1 x n row.
template <class S>
Var<S> diagonal(Var<S> a) {
  require(a.rows() == a.cols(), "diagonal: matrix not square");
  Tape<S>& t = *a.tape();
  Matrix<S> v = a.value().diagonal().transpose();
  return t.push(std::move(v), {a}, [a](int out) {
    return [a, out](Tape<S>& t) {
      Matrix<S> g = Matrix<S>::Zero(a.rows(), a.cols());
      g.diagonal() = t.grad(out).row(0).transpose();
      t.accumulate(a.id(), g);
    };
  });
}

/// Column-wise concatenation of equally tall blocks.
template <class S>
Var<S> hcat(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "hcat: no inputs");
  Tape<S>& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "hcat: row counts differ");
    cols += p.cols();
  }
  Matrix<S> v(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push_multi(std::move(v), parts, [parts](int out) -> typename Tape<S>::Backward {
    return [parts, out](Tape<S>& t) {
      Index c = 0;
      for (const auto& p : parts) {
        if (t.requires_grad(p.id())) t.accumulate(p.id(), t.grad(out).middleCols(c, p.cols()));
        c += p.cols();
      }
    };
  });
}

/// Row-wise concatenation of equally wide blocks.
template <class S>
Var<S> vcat(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "vcat: no inputs");
  Tape<S>& t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "vcat: column counts differ");
    rows += p.rows();
  }
  Matrix<S> v(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push_multi(std::move(v), parts, [parts](int out) -> typename Tape<S>::Backward {
    return [parts, out](Tape<S>& t) {
      Index r = 0;
      for (const auto& p : parts) {
        if (t.requires_grad(p.id())) t.accumulate(p.id(), t.grad(out).middleRows(r, p.rows()));
        r += p.rows();
      }
    };
  });
}

template <class S>
Var<S> col_slice(Var<S> a, Index start, Index count) {
  require(start >= 0 && start + count <= a.cols(), "col_slice: out of range");
  Tape<S>& t = *a.tape();
  return t.push(Matrix<S>(a.value().middleCols(start, count)), {a}, [a, start, count](int out) {
    return [a, start, count, out](Tape<S>& t) {
      Matrix<S> g = Matrix<S>::Zero(a.rows(), a.cols());
      g.middleCols(start, count) = t.grad(out);
      t.accumulate(a.id(), g);
    };
  });
}

/// Gathers rows by index (indices may repeat).
template <class S>
Var<S> select_rows(Var<S> a, std::vector<Index> rows) {
  Tape<S>& t = *a.tape();
  Matrix<S> v(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "select_rows: index out of range");
    v.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return t.push(std::move(v), {a}, [a, rows = std::move(rows)](int out) {
    return [a, rows, out](Tape<S>& t) {
      Matrix<S> g = Matrix<S>::Zero(a.rows(), a.cols());
      const Matrix<S>& go = t.grad(out);
      for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += go.row(static_cast<Index>(i));
      t.accumulate(a.id(), g);
    };
  });
}

template <class S>
Var<S> reverse_rows(Var<S> a) {
  Tape<S>& t = *a.tape();
  return t.push(Matrix<S>(a.value().colwise().reverse()), {a}, [a](int out) {
    return [a, out](Tape<S>& t) { t.accumulate(a.id(), t.grad(out).colwise().reverse()); };
  });
}

/// Divides every row by its L2 norm. A zero row throws ZeroVector.
template <class S>
Var<S> l2_normalize_rows(Var<S> a) {
  Tape<S>& t = *a.tape();
  Matrix<S> norms = a.value().rowwise().norm();
  for (Index i = 0; i < norms.rows(); ++i)
    if (!(norms(i, 0) > std::numeric_limits<S>::min()))
      throw Error(ErrorKind::ZeroVector, "row " + std::to_string(i) + " has zero norm");
  Matrix<S> y = a.value().array().colwise() / norms.col(0).array();
  return t.push(std::move(y), {a}, [a, norms = std::move(norms)](int out) {
    return [a, norms, out](Tape<S>& t) {
      const Matrix<S>& y = t.value(out);
      const Matrix<S>& g = t.grad(out);
      Matrix<S> dot = g.cwiseProduct(y).rowwise().sum();
      Matrix<S> gx = (g - y.cwiseProduct(dot.replicate(1, y.cols()))).array().colwise() / norms.col(0).array();
      t.accumulate(a.id(), gx);
    };
  });
}

}  // namespace hiccap::ad
