#include <doctest.h>

#include <cmath>

#include "hiccap/pretrain.hpp"
#include "hiccap/synth.hpp"
#include "test_support.hpp"

using namespace hiccap;
using hiccap::testing::random_clip;
using hiccap::testing::tiny_model_config;

namespace {

struct Batch {
  ModelConfig cfg = tiny_model_config();
  Dataset clips;
  std::vector<ClipTriplet> triplets;

  Batch(const HiccapModel<float>& m, std::size_t n, std::uint64_t seed = 11) : cfg(m.config()) {
    CounterRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) clips.push_back(random_clip(cfg.dims, rng, "c" + std::to_string(i)));
    for (const auto& c : clips) triplets.push_back(m.triplet(c));
  }
};

/// Independent restatement of the documented draw order, used as the oracle.
struct Draw {
  Modality modality;
  bool replace;
  std::size_t donor;
};
std::vector<Draw> reference_draws(std::size_t n, double p, CounterRng& rng) {
  std::vector<Draw> out;
  for (std::size_t i = 0; i < n; ++i) {
    Draw d{static_cast<Modality>(rng.below(3)), rng.bernoulli(p), 0};
    if (d.replace && n >= 2) {
      const std::size_t k = rng.below(n - 1);
      d.donor = k < i ? k : k + 1;
    }
    d.replace = d.replace && n >= 2;
    out.push_back(d);
  }
  return out;
}

SynthSpec small_aligned_spec(std::uint64_t seed) {
  SynthSpec s = SynthSpec::planted(seed);
  s.dims = {12, 10, 11};
  s.lengths = {{{2, 4}, {2, 4}, {2, 4}}};
  s.latent_dim = 4;
  s.noise = 0.2;
  s.distractor = 0.3;
  return s;
}

}  // namespace

TEST_CASE("match labels zero the two tasks that involve the replaced modality") {
  CHECK(match_labels(std::nullopt) == MatchLabels{1, 1, 1});
  CHECK(match_labels(Modality::Video) == MatchLabels{0, 0, 1});
  CHECK(match_labels(Modality::Audio) == MatchLabels{1, 0, 0});
  CHECK(match_labels(Modality::Text) == MatchLabels{0, 1, 0});
}

TEST_CASE("p = 0 leaves the batch untouched") {
  HiccapModel<float> m(tiny_model_config());
  Batch b(m, 6);
  CounterRng rng(1);
  auto cb = corrupt_batch(b.triplets, 0.0, rng);
  CHECK(cb.records == b.triplets);
  CHECK(cb.aligned().size() == 6);
  for (const auto& l : cb.labels) CHECK(l == MatchLabels{1, 1, 1});
}

TEST_CASE("a single-sample batch has no donor and stays aligned") {
  HiccapModel<float> m(tiny_model_config());
  Batch b(m, 1);
  CounterRng rng(2);
  auto cb = corrupt_batch(b.triplets, 1.0, rng);
  CHECK(cb.labels[0] == MatchLabels{1, 1, 1});
  CHECK_FALSE(cb.replaced[0].has_value());
  // The modality and Bernoulli draws are still consumed.
  CounterRng ref(2);
  ref.below(3);
  ref.bernoulli(1.0);
  CHECK(rng.below(1u << 30) == ref.below(1u << 30));
}

TEST_CASE("corruption reproduces the reference sampler draw for draw") {
  HiccapModel<float> m(tiny_model_config());
  for (std::size_t n : {2u, 5u}) {
    for (double p : {1.0, 0.5}) {
      Batch b(m, n);
      CounterRng rng(40 + n), ref(40 + n);
      auto cb = corrupt_batch(b.triplets, p, rng);
      auto draws = reference_draws(n, p, ref);
      for (std::size_t i = 0; i < n; ++i) {
        CAPTURE(i);
        CHECK(cb.replaced[i].has_value() == draws[i].replace);
        if (!draws[i].replace) {
          CHECK(cb.records[i] == b.triplets[i]);
          continue;
        }
        const auto mi = index_of(draws[i].modality);
        CHECK(cb.replaced[i]->modality == draws[i].modality);
        CHECK(cb.replaced[i]->donor == draws[i].donor);
        CHECK(draws[i].donor != i);
        CHECK(cb.records[i][mi] == b.triplets[draws[i].donor][mi]);
        for (std::size_t k = 0; k < 3; ++k)
          if (k != mi) CHECK(cb.records[i][k] == b.triplets[i][k]);
        CHECK(cb.labels[i] == match_labels(draws[i].modality));
      }
    }
  }
}

TEST_CASE("corruption rate and modality shares over many samples") {
  HiccapModel<float> m(tiny_model_config());
  Batch b(m, 10);
  CounterRng rng(2025);
  std::size_t total = 0, replaced = 0;
  std::array<std::size_t, 3> per{};
  for (int rep = 0; rep < 1000; ++rep) {
    auto cb = corrupt_batch(b.triplets, 0.5, rng);
    for (const auto& r : cb.replaced) {
      ++total;
      if (!r) continue;
      ++replaced;
      ++per[index_of(r->modality)];
    }
  }
  const double rate = static_cast<double>(replaced) / static_cast<double>(total);
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
  for (auto c : per) {
    const double share = static_cast<double>(c) / static_cast<double>(replaced);
    CHECK(share >= 0.313);
    CHECK(share <= 0.353);
  }
}

TEST_CASE("donor features are referenced and never modified") {
  HiccapModel<float> m(tiny_model_config());
  Batch b(m, 4);
  const Dataset before = b.clips;
  CounterRng rng(3);
  auto cb = corrupt_batch(b.triplets, 1.0, rng);
  for (std::size_t i = 0; i < b.clips.size(); ++i) {
    CHECK(b.clips[i].audio.data() == before[i].audio.data());
    CHECK(b.clips[i].video.data() == before[i].video.data());
    CHECK(b.clips[i].text->data() == before[i].text->data());
  }
  for (const auto& r : cb.records)
    for (const auto* seq : r) {
      bool owned = false;
      for (const auto& c : b.clips) owned = owned || seq == &c.audio || seq == &c.video || seq == &*c.text;
      CHECK(owned);
    }
}

TEST_CASE("the hybrid total is the sum of its recomputed parts") {
  HiccapModel<double> m(tiny_model_config());
  CounterRng rng(5);
  Dataset clips;
  for (int i = 0; i < 6; ++i) clips.push_back(random_clip(m.config().dims, rng, "c" + std::to_string(i)));
  std::vector<ClipTriplet> trip;
  for (const auto& c : clips) trip.push_back(m.triplet(c));
  CounterRng crng(6);
  auto cb = corrupt_batch(trip, 0.5, crng);
  REQUIRE(!cb.aligned().empty());

  ad::Tape<double> t(false);
  auto both = pretrain_losses(t, m, cb, true, true, Mode::Eval);
  REQUIRE(both.matching);
  REQUIRE(both.contrastive);
  CHECK(both.aligned == cb.aligned().size());

  // Matching: softplus-weighted cross entropies against the corrupted labels, from the logits.
  auto reps = m.represent(t, cb.records);
  auto logits = m.matching_logits(t, reps, Mode::Eval);
  double matching = 0;
  for (int k = 0; k < 3; ++k) {
    const MatrixD& z = logits[k].value();
    double ce = 0;
    for (Index i = 0; i < z.rows(); ++i) {
      const double lse = std::log(std::exp(z(i, 0)) + std::exp(z(i, 1)));
      ce += lse - z(i, cb.labels[static_cast<std::size_t>(i)][k]);
    }
    matching += std::log1p(std::exp(m.matching_theta().value(0, k))) * ce / static_cast<double>(z.rows());
  }
  CHECK(both.matching->scalar() == doctest::Approx(matching).epsilon(1e-10));

  auto contrastive_only = pretrain_losses(t, m, cb, false, true, Mode::Eval);
  CHECK(contrastive_only.contrastive->scalar() == doctest::Approx(both.contrastive->scalar()).epsilon(1e-12));
  CHECK(both.total.scalar() ==
        doctest::Approx(both.matching->scalar() + both.contrastive->scalar()).epsilon(1e-12));
  CHECK_THROWS_AS(pretrain_losses(t, m, cb, false, false, Mode::Eval), Error);
}

TEST_CASE("a fully corrupted batch falls back to matching and flags it") {
  HiccapModel<float> m(tiny_model_config());
  Batch b(m, 4);
  CounterRng rng(8);
  auto cb = corrupt_batch(b.triplets, 1.0, rng);
  REQUIRE(cb.aligned().empty());
  AdamW<float> opt(OptimizerConfig{});
  auto hybrid = pretrain_step(m, cb, true, true, opt);
  CHECK(hybrid.applied);
  CHECK(hybrid.empty_aligned);
  CHECK_FALSE(hybrid.contrastive.has_value());
  CHECK(hybrid.total == doctest::Approx(*hybrid.matching));

  auto contrastive = pretrain_step(m, cb, false, true, opt);
  CHECK_FALSE(contrastive.applied);
  CHECK(contrastive.empty_aligned);
  CHECK(opt.steps() == 1);
}

TEST_CASE("zero pretraining epochs leave the model unchanged") {
  auto spec = small_aligned_spec(1);
  auto splits = generate_aligned_splits(spec, 16, 8, 0);
  ModelConfig cfg = tiny_model_config(8, spec.dims);
  Model m(cfg), reference(cfg);
  PretrainConfig pc;
  pc.opt.epochs = 0;
  auto result = run_pretraining(m, splits.train, splits.val, pc);
  CHECK(result.history.empty());
  CHECK(result.best_epoch == 0);
  for (std::size_t i = 0; i < m.params().params().size(); ++i)
    CHECK(m.params().params()[i].value == reference.params().params()[i].value);
}

TEST_CASE("pretraining is deterministic for a fixed seed") {
  auto spec = small_aligned_spec(2);
  auto splits = generate_aligned_splits(spec, 24, 8, 0);
  ModelConfig cfg = tiny_model_config(8, spec.dims);
  PretrainConfig pc;
  pc.opt.epochs = 2;
  pc.opt.batch_size = 8;
  pc.corruption.seed = 9;
  Model a(cfg), b(cfg);
  auto ra = run_pretraining(a, splits.train, splits.val, pc);
  auto rb = run_pretraining(b, splits.train, splits.val, pc);
  CHECK(ra.step_losses == rb.step_losses);
  REQUIRE(ra.history.size() == 2);
  CHECK(ra.history[1].val_loss == rb.history[1].val_loss);
}

TEST_CASE("pretraining on aligned data lowers validation loss and separates pairs") {
  auto spec = small_aligned_spec(3);
  auto splits = generate_aligned_splits(spec, 96, 32, 0);
  ModelConfig cfg = tiny_model_config(16, spec.dims);
  PretrainConfig pc;
  pc.opt.epochs = 12;
  pc.opt.lr = 1e-3;
  pc.opt.batch_size = 16;
  pc.corruption.seed = 4;
  Model m(cfg);
  auto result = run_pretraining(m, splits.train, splits.val, pc);
  REQUIRE(result.best_epoch >= 1);
  const double best = result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_loss;
  CAPTURE(result.initial_val_loss);
  CAPTURE(best);
  CHECK(best < result.initial_val_loss);

  // Audio-video pair on held-out clips: true partners should be closer than mismatched ones.
  std::vector<ClipTriplet> trip;
  for (const auto& c : splits.val) trip.push_back(m.triplet(c));
  ad::Tape<float> t(false);
  auto reps = m.represent(t, trip);
  const MatrixF za = reps.pooled[index_of(Modality::Audio)].value();
  const MatrixF zv = reps.pooled[index_of(Modality::Video)].value();
  MatrixF both(za.rows() * 2, za.cols());
  both << za, zv;
  const MatrixF u = project_pair(both, m.projections()[0]);
  const Index n = za.rows();
  const MatrixF sims = u.topRows(n) * u.bottomRows(n).transpose();
  double pos = 0, neg = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) (i == j ? pos : neg) += sims(i, j);
  pos /= static_cast<double>(n);
  neg /= static_cast<double>(n * (n - 1));
  CAPTURE(pos);
  CAPTURE(neg);
  CHECK(pos > neg);
}

TEST_CASE("objective and schedule names round-trip") {
  for (auto o : {PretrainObjective::Hybrid, PretrainObjective::MatchingOnly, PretrainObjective::ContrastiveOnly})
    CHECK(objective_from_string(to_string(o)) == o);
  for (auto s : {PretrainSchedule::Summed, PretrainSchedule::Alternating})
    CHECK(schedule_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(objective_from_string("mlm"), Error);
  CHECK_THROWS_AS(schedule_from_string("random"), Error);
}
