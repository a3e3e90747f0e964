#include <doctest.h>

#include <cmath>

#include "hiccap/encoders.hpp"
#include "hiccap/heads_losses.hpp"
#include "test_support.hpp"

using namespace hiccap;
using hiccap::testing::check_gradients;
using hiccap::testing::random_matrix;

namespace {

EncoderConfig encoder_cfg(Index d, bool bidirectional = false, Index layers = 1) {
  EncoderConfig c;
  c.d_model = d;
  c.bidirectional = bidirectional;
  c.recurrent_layers = layers;
  return c;
}

/// Scalar LSTM written per unit from the gate equations, for comparison with the fused node.
MatrixD lstm_oracle(const MatrixD& x, const MatrixD& w_ih, const MatrixD& w_hh, const MatrixD& b) {
  const Index H = w_hh.rows();
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(static_cast<std::size_t>(H), 0.0);
  MatrixD out(x.rows(), H);
  for (Index t = 0; t < x.rows(); ++t) {
    std::vector<double> z(static_cast<std::size_t>(4 * H));
    for (Index k = 0; k < 4 * H; ++k) {
      double s = b(0, k);
      for (Index i = 0; i < x.cols(); ++i) s += x(t, i) * w_ih(i, k);
      for (Index j = 0; j < H; ++j) s += h[static_cast<std::size_t>(j)] * w_hh(j, k);
      z[static_cast<std::size_t>(k)] = s;
    }
    for (Index k = 0; k < H; ++k) {
      const auto u = static_cast<std::size_t>(k);
      const double ig = sig(z[u]), fg = sig(z[u + H]), gg = std::tanh(z[u + 2 * H]), og = sig(z[u + 3 * H]);
      c[u] = fg * c[u] + ig * gg;
      h[u] = og * std::tanh(c[u]);
      out(t, k) = h[u];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("text encoder is a per-timestep affine map") {
  ParamStore<double> store;
  CounterRng rng(1);
  TextEncoder<double> enc(store, "t", 4, encoder_cfg(4), rng);

  SUBCASE("identity weights reproduce the input") {
    enc.projection.weight->value.setIdentity();
    enc.projection.bias->value.setZero();
    MatrixF x = hiccap::testing::random_matrix_f(3, 4, rng);
    CHECK(encode_text(FeatureSequence(Modality::Text, x), enc).data.isApprox(x.cast<double>()));
  }
  SUBCASE("zero input and zero bias give zero output") {
    enc.projection.bias->value.setZero();
    CHECK(encode_text(FeatureSequence(Modality::Text, MatrixF::Zero(2, 4)), enc).data.isZero());
  }
  SUBCASE("a one-hot row picks a weight row plus the bias") {
    MatrixF x = MatrixF::Zero(1, 4);
    x(0, 2) = 1.0f;
    MatrixD expect = enc.projection.weight->value.row(2) + enc.projection.bias->value;
    CHECK(encode_text(FeatureSequence(Modality::Text, x), enc).data.isApprox(expect, 1e-12));
  }
  SUBCASE("without bias the map is linear") {
    enc.projection.bias->value.setZero();
    MatrixF x = hiccap::testing::random_matrix_f(3, 4, rng), y = hiccap::testing::random_matrix_f(3, 4, rng);
    const float a = 0.7f, b = -1.3f;
    MatrixD lhs = encode_text(FeatureSequence(Modality::Text, MatrixF(a * x + b * y)), enc).data;
    MatrixD rhs = a * encode_text(FeatureSequence(Modality::Text, x), enc).data +
               b * encode_text(FeatureSequence(Modality::Text, y), enc).data;
    const double diff = (lhs - rhs).norm(), scale = rhs.norm();
    CAPTURE(diff);
    CAPTURE(scale);
    CHECK(diff <= 1e-6 * scale);
  }
}

TEST_CASE("recurrent encoders keep length, width and determinism") {
  for (bool bi : {false, true}) {
    ParamStore<double> store;
    CounterRng rng(2);
    RecurrentEncoder<double> enc(store, "a", 5, encoder_cfg(6, bi, 2), rng);
    for (Index T : {1, 4}) {
      FeatureSequence seq(Modality::Audio, hiccap::testing::random_matrix_f(T, 5, rng));
      auto first = encode_audio(seq, enc);
      auto second = encode_audio(seq, enc);
      CHECK(first.length() == T);
      CHECK(first.data.cols() == 6);
      CHECK(first.data == second.data);
      CHECK(first.data.allFinite());
    }
  }
}

TEST_CASE("zero weights and zero input give zero recurrent output") {
  ParamStore<double> store;
  CounterRng rng(3);
  RecurrentEncoder<double> enc(store, "v", 3, encoder_cfg(4), rng);
  for (auto& p : store.params()) p.value.setZero();
  CHECK(encode_video(FeatureSequence(Modality::Video, MatrixF::Zero(5, 3)), enc).data.isZero());
}

TEST_CASE("encoders reject the wrong modality and empty sequences") {
  ParamStore<double> store;
  CounterRng rng(4);
  RecurrentEncoder<double> enc(store, "a", 3, encoder_cfg(4), rng);
  auto kind = [&](const FeatureSequence& s) {
    try {
      encode_audio(s, enc);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind(FeatureSequence(Modality::Video, MatrixF::Zero(2, 3))) == ErrorKind::WrongModality);
  CHECK(kind(FeatureSequence(Modality::Audio, MatrixF::Zero(0, 3))) == ErrorKind::EmptySequence);
}

TEST_CASE("fused LSTM forward matches a scalar recurrence") {
  ParamStore<double> store;
  CounterRng rng(5);
  LstmLayer<double> layer(store, "l", 3, 4, rng);
  MatrixD x = random_matrix(6, 3, rng);
  ad::Tape<double> t(false);
  MatrixD got = layer(t, t.constant(x)).value();
  CHECK(got.isApprox(lstm_oracle(x, layer.w_ih->value, layer.w_hh->value, layer.bias->value), 1e-12));
}

TEST_CASE("encoder gradients match central differences") {
  ParamStore<double> store;
  CounterRng rng(6);
  RecurrentEncoder<double> audio(store, "a", 3, encoder_cfg(4, true, 2), rng);
  TextEncoder<double> text(store, "t", 5, encoder_cfg(4), rng);
  MatrixD xa = random_matrix(5, 3, rng), xt = random_matrix(3, 5, rng);
  MatrixD wa = random_matrix(5, 4, rng), wt = random_matrix(3, 4, rng);
  auto loss = [&](ad::Tape<double>& t) {
    auto a = audio(t, t.constant(xa));
    auto b = text(t, t.constant(xt));
    return ad::add(ad::sum(ad::mul(ad::tanh(a), t.constant(wa))), ad::sum(ad::mul(b, t.constant(wt))));
  };
  auto g = check_gradients<double>(store, loss);
  CAPTURE(g.worst);
  CHECK(g.max_rel_error <= 1e-4);
}

TEST_CASE("train-mode batch norm of {-1, +1}") {
  ParamStore<double> store;
  BatchNorm<double> bn(store, "bn", 1);
  ad::Tape<double> t(false);
  Matrix<double> x(2, 1);
  x << -1.0, 1.0;
  auto y = bn(t, t.constant(x), Mode::Train).value();
  const double expect = 1.0 / std::sqrt(1.0 + bn.cfg.eps);
  CHECK(y(0, 0) == doctest::Approx(-expect).epsilon(1e-15));
  CHECK(y(1, 0) == doctest::Approx(expect).epsilon(1e-15));
  // Running stats: momentum 0.1 toward mean 0 and unbiased variance 2.
  CHECK(bn.running_mean->value(0, 0) == doctest::Approx(0.0));
  CHECK(bn.running_var->value(0, 0) == doctest::Approx(0.9 + 0.1 * 2.0));
}

TEST_CASE("batch norm falls back to running statistics") {
  ParamStore<double> store;
  BatchNorm<double> bn(store, "bn", 2);
  bn.running_mean->value << 1.0, -1.0;
  bn.running_var->value << 4.0, 0.25;
  Matrix<double> x(1, 2);
  x << 3.0, 0.0;
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    ad::Tape<double> t(false);
    auto y = bn(t, t.constant(x), mode).value();
    CHECK(y(0, 0) == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(y(0, 1) == doctest::Approx(1.0 / std::sqrt(0.25 + 1e-5)));
  }
  CHECK(bn.running_mean->value(0, 0) == 1.0);  // singleton batches do not update the stats
}

TEST_CASE("mlp block contracts") {
  ParamStore<double> store;
  CounterRng rng(7);
  MlpBlock<double> mlp(store, "m", default_mlp_widths(12, 2), rng);
  CHECK(default_mlp_widths(12, 2) == std::vector<Index>{12, 6, 3, 2});
  CHECK(default_mlp_widths(2, 2) == std::vector<Index>{2, 1, 1, 2});
  CHECK(mlp_block(random_matrix(5, 12, rng), mlp, Mode::Eval).cols() == 2);

  for (auto& p : store.params())
    if (p.trainable) p.value.setZero();
  CHECK(mlp_block(MatrixD(MatrixD::Zero(3, 12)), mlp, Mode::Eval).isZero());
  CHECK_THROWS_AS(mlp_block(MatrixD(MatrixD::Zero(3, 11)), mlp, Mode::Eval), Error);
  CHECK_THROWS_AS(MlpBlock<double>(store, "bad", {4, 2, 1}, rng), Error);
}

TEST_CASE("mlp gradients in train mode match central differences") {
  ParamStore<double> store;
  CounterRng rng(8);
  MlpBlock<double> mlp(store, "m", {6, 5, 4, 3}, rng);
  MatrixD x = random_matrix(4, 6, rng), w = random_matrix(4, 3, rng);
  auto loss = [&](ad::Tape<double>& t) { return ad::sum(ad::mul(mlp(t, t.constant(x), Mode::Train), t.constant(w))); };
  auto g = check_gradients<double>(store, loss);
  CAPTURE(g.worst);
  CHECK(g.max_rel_error <= 1e-4);
}
