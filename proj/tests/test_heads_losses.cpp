#include <doctest.h>

#include <cmath>

#include "hiccap/heads_losses.hpp"
#include "test_support.hpp"

using namespace hiccap;
using hiccap::testing::check_gradients;
using hiccap::testing::random_matrix;

namespace {

const double kLn2 = std::log(2.0);

/// Head whose logits are exactly `bias` for every input.
void constant_logits(MlpBlock<double>& head, double l0, double l1) {
  head.fc3.weight->value.setZero();
  head.fc3.bias->value << l0, l1;
}

MatrixD unit_rows(MatrixD m) {
  for (Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

/// -log( sum_i exp(<u_i,u'_i>/tau) / sum_{i,j} exp(<u_i,u'_j>/tau) ) with plain loops.
double nce_oracle(const MatrixD& u, const MatrixD& w, double tau) {
  double num = 0, den = 0;
  for (Index i = 0; i < u.rows(); ++i) {
    for (Index j = 0; j < w.rows(); ++j) {
      double dot = 0;
      for (Index c = 0; c < u.cols(); ++c) dot += u(i, c) * w(j, c);
      const double e = std::exp(dot / tau);
      den += e;
      if (i == j) num += e;
    }
  }
  return -std::log(num / den);
}

double softplus(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("binary head probabilities") {
  ParamStore<double> store;
  CounterRng rng(1);
  MlpBlock<double> head(store, "h", default_mlp_widths(12, 2), rng);
  MatrixD r = random_matrix(3, 4, rng);

  constant_logits(head, 0.7, 0.7);
  auto p = binary_forward(r, r, r, head);
  CHECK(p.isApprox(MatrixD::Constant(3, 2, 0.5)));

  constant_logits(head, 0.0, std::log(3.0));
  p = binary_forward(r, r, r, head);
  CHECK(p(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p(1, 1) == doctest::Approx(0.75).epsilon(1e-12));

  MlpBlock<double> fresh(store, "g", default_mlp_widths(12, 2), rng);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixD a = random_matrix(5, 4, rng, 3.0), b = random_matrix(5, 4, rng), c = random_matrix(5, 4, rng);
    MatrixD q = binary_forward(a, b, c, fresh);
    CHECK((q.array() >= 0).all());
    CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("multitask heads are independent binary heads") {
  ParamStore<double> store;
  CounterRng rng(2);
  std::array<MlpBlock<double>, 4> heads;
  for (int i = 0; i < 4; ++i) heads[i] = MlpBlock<double>(store, "h" + std::to_string(i), {9, 4, 2, 2}, rng);
  constant_logits(heads[2], 0.0, std::log(3.0));
  MatrixD r = random_matrix(2, 3, rng);
  auto out = multitask_forward(r, r, r, heads);
  CHECK(out[2](0, 1) == doctest::Approx(0.75));
  for (int i = 0; i < 4; ++i) CHECK(out[i].isApprox(binary_forward(r, r, r, heads[i])));
}

TEST_CASE("matching head probabilities") {
  ParamStore<double> store;
  CounterRng rng(3);
  MlpBlock<double> head(store, "m", default_mlp_widths(8, 2), rng);
  MatrixD a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  CHECK(matching_forward(a, b, head).cols() == 2);
  constant_logits(head, 1.0, 1.0);
  CHECK(matching_forward(a, b, head).isApprox(MatrixD::Constant(3, 2, 0.5)));
  constant_logits(head, 0.0, std::log(3.0));
  CHECK(matching_forward(a, b, head)(0, 1) == doctest::Approx(0.75));
}

TEST_CASE("task loss") {
  MatrixD p(1, 2);
  p << 1.0, 0.0;
  CHECK(task_loss(p, 0) == 0.0);
  p << 0.5, 0.5;
  CHECK(task_loss(p, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  p << 0.25, 0.75;
  CHECK(task_loss(p, 1) == doctest::Approx(0.2877).epsilon(1e-4));
  CHECK(task_loss(p, 1) == doctest::Approx(-std::log(0.75)).epsilon(1e-15));
}

TEST_CASE("softplus-weighted totals") {
  CounterRng rng(4);
  MatrixD theta = MatrixD::Zero(1, 4);
  CHECK(multitask_total<double>({0, 0, 0, 0}, random_matrix(1, 4, rng)) == 0.0);
  CHECK(multitask_total<double>({1, 1, 1, 1}, theta) == doctest::Approx(4 * kLn2).epsilon(1e-15));
  CHECK(multitask_total<double>({1, 1, 1, 1}, theta) == doctest::Approx(2.7726).epsilon(1e-4));
  theta.setConstant(std::log(std::exp(1.0) - 1.0));  // softplus = 1
  CHECK(multitask_total<double>({0.5, 0.25, 0.25, 1.0}, theta) == doctest::Approx(2.0).epsilon(1e-12));

  MatrixD lam = MatrixD::Zero(1, 3);
  CHECK(matching_total<double>({0, 0, 0}, lam) == 0.0);
  CHECK(matching_total<double>({1, 2, 3}, lam) == doctest::Approx(6 * kLn2));
  lam.setConstant(std::log(std::exp(1.0) - 1.0));
  CHECK(matching_total<double>({0.5, 0.25, 0.25}, lam) == doctest::Approx(1.0));

  // Linear in the losses for fixed weights.
  MatrixD t = random_matrix(1, 4, rng);
  std::array<double, 4> a{1.2, 0.3, 2.0, 0.1}, b{0.4, 1.1, 0.0, 3.0}, c{};
  for (int i = 0; i < 4; ++i) c[i] = 2 * a[i] - 0.5 * b[i];
  CHECK(multitask_total(c, t) == doctest::Approx(2 * multitask_total(a, t) - 0.5 * multitask_total(b, t)));
}

TEST_CASE("pair projections produce unit rows") {
  ParamStore<double> store;
  CounterRng rng(5);
  MlpBlock<double> g(store, "g", {6, 6, 6, 5}, rng);
  MatrixD z = random_matrix(7, 6, rng);
  for (Mode mode : {Mode::Eval, Mode::Train}) {
    MatrixD u = project_pair(z, g, mode);
    CHECK(u.cols() == 5);
    CHECK((u.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("an identity-configured projection returns a unit input") {
  ParamStore<double> store;
  CounterRng rng(6);
  MlpBlock<double> g(store, "g", {3, 3, 3, 3}, rng);
  for (Linear<double>* l : {&g.fc1, &g.fc2, &g.fc3}) {
    l->weight->value.setIdentity();
    l->bias->value.setZero();
  }
  for (BatchNorm<double>* bn : {&g.bn1, &g.bn2}) bn->running_var->value.setConstant(1.0 - bn->cfg.eps);
  MatrixD z(1, 3);
  z << 0.6, 0.0, 0.8;
  CHECK(project_pair(z, g).isApprox(z, 1e-12));
}

TEST_CASE("a zero row cannot be projected") {
  ParamStore<double> store;
  CounterRng rng(7);
  MlpBlock<double> g(store, "g", {3, 3, 3, 3}, rng);
  g.fc3.weight->value.setZero();
  g.fc3.bias->value.setZero();
  try {
    project_pair(random_matrix(2, 3, rng), g);
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVector);
  }
}

TEST_CASE("nce worked values") {
  MatrixD one = unit_rows(MatrixD::Ones(1, 3));
  CHECK(std::abs(nce_loss(one, one, 0.07)) <= 1e-9);
  MatrixD eye = MatrixD::Identity(2, 2);
  CHECK(nce_loss(eye, eye, 1.0) == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(std::abs(nce_loss(eye, eye, 1.0) - softplus(-1.0)) <= 1e-12);
}

TEST_CASE("nce matches the pooled double-loop formula") {
  CounterRng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(32)), p = 1 + static_cast<Index>(rng.below(6));
    MatrixD u = unit_rows(random_matrix(n, p, rng)), w = unit_rows(random_matrix(n, p, rng));
    const double tau = 0.05 + rng.uniform();
    const double got = nce_loss(u, w, tau), want = nce_oracle(u, w, tau);
    CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    if (n >= 2) CHECK(got > 0.0);
  }
}

TEST_CASE("duplicating a batch follows the pooled formula") {
  CounterRng rng(9);
  MatrixD u = unit_rows(random_matrix(4, 3, rng)), w = unit_rows(random_matrix(4, 3, rng));
  MatrixD uu(8, 3), ww(8, 3);
  uu << u, u;
  ww << w, w;
  const double doubled = nce_loss(uu, ww, 0.5);
  CHECK(doubled == doctest::Approx(nce_oracle(uu, ww, 0.5)).epsilon(1e-12));
  // Pooling: numerator and denominator scale by 2 and 4, so the loss grows by exactly ln 2.
  CHECK(doubled == doctest::Approx(nce_loss(u, w, 0.5) + kLn2).epsilon(1e-12));
}

TEST_CASE("contrastive total matches an eval-mode oracle") {
  ParamStore<double> store;
  CounterRng rng(10);
  std::array<MlpBlock<double>, 3> proj;
  for (int p = 0; p < 3; ++p) proj[p] = MlpBlock<double>(store, "g" + std::to_string(p), {5, 5, 5, 4}, rng);
  auto& theta = store.add_constant("theta", 1, 3, 0.0);
  theta.value = random_matrix(1, 3, rng);
  MatrixD za = random_matrix(6, 5, rng), zv = random_matrix(6, 5, rng), zt = random_matrix(6, 5, rng);

  ad::Tape<double> t(false);
  auto terms = contrastive_total(t, t.constant(za), t.constant(zv), t.constant(zt), proj, theta, 0.2, Mode::Eval);
  const std::array<std::pair<const MatrixD*, const MatrixD*>, 3> pairs{{{&za, &zv}, {&za, &zt}, {&zv, &zt}}};
  double total = 0;
  for (int p = 0; p < 3; ++p) {
    const double l = nce_oracle(project_pair(*pairs[p].first, proj[p]), project_pair(*pairs[p].second, proj[p]), 0.2);
    CHECK(terms.pair_losses[p].scalar() == doctest::Approx(l).epsilon(1e-10));
    total += softplus(theta.value(0, p)) * l;
  }
  CHECK(terms.total.scalar() == doctest::Approx(total).epsilon(1e-10));

  ad::Tape<double> single(false);
  auto one = contrastive_total(single, single.constant(MatrixD(za.topRows(1))), single.constant(MatrixD(zv.topRows(1))),
                               single.constant(MatrixD(zt.topRows(1))), proj, theta, 0.2, Mode::Train);
  CHECK(std::abs(one.total.scalar()) <= 1e-9);
}

TEST_CASE("contrastive and weighted-sum gradients match central differences") {
  ParamStore<double> store;
  CounterRng rng(11);
  std::array<MlpBlock<double>, 3> proj;
  for (int p = 0; p < 3; ++p) proj[p] = MlpBlock<double>(store, "g" + std::to_string(p), {4, 4, 3, 3}, rng);
  auto& theta = store.add_constant("theta", 1, 3, 0.0);
  theta.value = random_matrix(1, 3, rng);
  auto& z = store.add_constant("z", 12, 4, 0.0);
  z.value = random_matrix(12, 4, rng);
  auto loss = [&](ad::Tape<double>& t) {
    auto all = t.param(z);
    auto pick = [&](Index from) { return ad::select_rows(all, {from, from + 1, from + 2, from + 3}); };
    return contrastive_total(t, pick(0), pick(4), pick(8), proj, theta, 0.3, Mode::Train).total;
  };
  auto g = check_gradients<double>(store, loss);
  CAPTURE(g.worst);
  CHECK(g.max_rel_error <= 1e-4);
}
