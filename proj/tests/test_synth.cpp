#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hiccap/synth.hpp"

using namespace hiccap;

namespace {

const FeatureSequence* channel(const ClipRecord& c, Modality m) {
  if (m == Modality::Text) return c.text ? &*c.text : nullptr;
  return m == Modality::Audio ? &c.audio : &c.video;
}

double channel_mean(const ClipRecord& c, const SignalChannel& ch) {
  const FeatureSequence* s = channel(c, ch.modality);
  if (!s) return 0.0;
  double sum = 0;
  for (Index t = 0; t < s->length(); ++t)
    for (Index d : ch.dims) sum += s->data()(t, d);
  return sum / static_cast<double>(s->length() * static_cast<Index>(ch.dims.size()));
}

/// Mean-pooled features of all three channels plus a bias column.
Eigen::RowVectorXd pooled_row(const ClipRecord& c, const FeatureDims& dims) {
  Eigen::RowVectorXd r(dims.text + dims.audio + dims.video + 1);
  auto mean = [](const FeatureSequence* s, Index w) {
    return s ? Eigen::RowVectorXd(s->data().cast<double>().colwise().mean()) : Eigen::RowVectorXd::Zero(w);
  };
  r << mean(channel(c, Modality::Text), dims.text), mean(&c.audio, dims.audio), mean(&c.video, dims.video), 1.0;
  return r;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  SynthSpec s = SynthSpec::planted(5);
  s.n_clips = 20;
  Dataset a = generate(s), b = generate(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clip_id == b[i].clip_id);
    CHECK(a[i].audio.data() == b[i].audio.data());
    CHECK(a[i].labels == b[i].labels);
  }
  s.seed = 6;
  CHECK(generate(s)[0].audio.data() != a[0].audio.data());
}

TEST_CASE("generated clips pass validation") {
  SynthSpec s = SynthSpec::planted(1);
  s.n_clips = 50;
  s.caption_fraction = 0.3;
  s.text_absent_fraction = 0.2;
  for (const auto& c : generate(s)) {
    CAPTURE(c.clip_id);
    CHECK(validate_clip(c, s.dims).empty());
    const auto [lo, hi] = s.lengths[index_of(Modality::Audio)];
    CHECK(c.audio.length() >= lo);
    CHECK(c.audio.length() <= hi);
  }
}

TEST_CASE("noiseless clips carry labels exactly as planted") {
  SynthSpec s = SynthSpec::planted(2);
  s.n_clips = 200;
  s.noise = 0.0;
  s.distractor = 0.0;
  for (const auto& c : generate(s)) {
    for (const auto& sig : s.signals) {
      bool all = true;
      for (const auto& ch : sig.channels) {
        const double offset = channel_mean(c, ch) - sig.threshold;
        // Each channel sits at threshold +/- strength * (1 +/- jitter); never at the threshold.
        CHECK(std::abs(offset) >= sig.strength * (1 - s.jitter) - 1e-5);
        CHECK(std::abs(offset) <= sig.strength * (1 + s.jitter) + 1e-5);
        all = all && offset > 0;
      }
      CHECK(c.labels->categories[static_cast<int>(sig.category)] == all);
    }
    CHECK(c.labels->binary == derive_binary(*c.labels));
    CHECK(*c.labels == planted_labels(c, s));
  }
}

TEST_CASE("label prevalence tracks the target") {
  SynthSpec s = SynthSpec::planted(3);
  s.n_clips = 2000;
  std::array<int, kNumCategories> pos{};
  for (const auto& c : generate(s))
    for (int k = 0; k < kNumCategories; ++k) pos[k] += c.labels->categories[k];
  for (int k = 0; k < kNumCategories; ++k) {
    CAPTURE(k);
    CHECK(pos[k] / 2000.0 == doctest::Approx(0.35).epsilon(0.03 / 0.35));
  }
}

TEST_CASE("a linear probe on pooled features recovers the planted labels") {
  SynthSpec s = SynthSpec::planted(4);
  auto splits = generate_splits(s, 2000, 0, 500);
  const Index width = s.dims.text + s.dims.audio + s.dims.video + 1;
  Eigen::MatrixXd x(static_cast<Index>(splits.train.size()), width);
  Eigen::MatrixXd y(x.rows(), kNumCategories);
  for (Index i = 0; i < x.rows(); ++i) {
    const auto& c = splits.train[static_cast<std::size_t>(i)];
    x.row(i) = pooled_row(c, s.dims);
    for (int k = 0; k < kNumCategories; ++k) y(i, k) = c.labels->categories[k] ? 1.0 : -1.0;
  }
  const Eigen::MatrixXd w = x.colPivHouseholderQr().solve(y);
  for (int k = 0; k < kNumCategories; ++k) {
    int right = 0;
    for (const auto& c : splits.test) right += ((pooled_row(c, s.dims) * w.col(k))(0) > 0) == c.labels->categories[k];
    CAPTURE(k);
    CHECK(right / 500.0 > 0.95);
  }
}

TEST_CASE("a noiseless aligned corpus is an exact linear image of one latent per clip") {
  SynthSpec s = SynthSpec::planted(7);
  s.n_clips = 20;
  s.noise = 0.0;
  s.distractor = 0.0;
  s.text_absent_fraction = 0.0;
  const Dataset clips = generate_aligned_corpus(s);
  std::array<MatrixD, 3> e;
  for (Modality m : kModalities) e[index_of(m)] = aligned_embedding(s, m);
  MatrixD stacked(s.dims.text + s.dims.audio + s.dims.video, s.latent_dim);
  stacked << e[0], e[1], e[2];
  for (const auto& c : clips) {
    CHECK_FALSE(c.labels.has_value());
    Eigen::VectorXd obs(stacked.rows());
    obs << c.text->data().row(0).transpose().cast<double>(), c.audio.data().row(0).transpose().cast<double>(),
        c.video.data().row(0).transpose().cast<double>();
    const Eigen::VectorXd z = stacked.colPivHouseholderQr().solve(obs);
    CHECK((stacked * z - obs).norm() <= 1e-5 * (1 + obs.norm()));
    for (Modality m : kModalities) {
      const MatrixF& data = channel(c, m)->data();
      for (Index t = 0; t < data.rows(); ++t)
        CHECK((data.row(t).cast<double>().transpose() - e[index_of(m)] * z).norm() <= 1e-5 * (1 + z.norm()));
    }
  }
}

TEST_CASE("aligned splits share one embedding and differ per clip") {
  SynthSpec s = SynthSpec::planted(8);
  auto splits = generate_aligned_splits(s, 4, 4, 4);
  CHECK(splits.train.size() == 4);
  CHECK(splits.train[0].audio.data() != splits.val[0].audio.data());
  CHECK(splits.train[0].clip_id != splits.val[0].clip_id);
  CHECK(aligned_embedding(s, Modality::Audio) == aligned_embedding(s, Modality::Audio));
}

TEST_CASE("invalid synth specs are rejected") {
  auto bad = [](auto edit) {
    SynthSpec s = SynthSpec::planted();
    edit(s);
    return s;
  };
  CHECK_THROWS_AS(generate(bad([](SynthSpec& s) { s.lengths[0] = {3, 2}; })), Error);
  CHECK_THROWS_AS(generate(bad([](SynthSpec& s) { s.jitter = 1.0; })), Error);
  CHECK_THROWS_AS(generate(bad([](SynthSpec& s) { s.signals[0].channels[0].dims = {99}; })), Error);
  CHECK_THROWS_AS(generate(bad([](SynthSpec& s) { s.signals.push_back(s.signals[0]); })), Error);
  CHECK_THROWS_AS(generate(bad([](SynthSpec& s) { s.caption_fraction = 0.8, s.text_absent_fraction = 0.3; })), Error);
}
