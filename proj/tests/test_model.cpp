#include <doctest.h>

#include "hiccap/pretrain.hpp"
#include "hiccap/train_eval.hpp"
#include "test_support.hpp"

using namespace hiccap;
using hiccap::testing::check_gradients;
using hiccap::testing::random_clip;
using hiccap::testing::tiny_model_config;

namespace {

struct Fixture {
  ModelConfig cfg = tiny_model_config();
  Dataset clips;
  std::vector<ClipTriplet> triplets;
  std::vector<const ClipRecord*> ptrs;

  explicit Fixture(std::size_t n = 4, std::uint64_t seed = 3) {
    CounterRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) clips.push_back(random_clip(cfg.dims, rng, "c" + std::to_string(i)));
    for (const auto& c : clips) ptrs.push_back(&c);
  }
  template <class S>
  void bind(const HiccapModel<S>& m) {
    triplets.clear();
    for (const auto& c : clips) triplets.push_back(m.triplet(c));
  }
};

}  // namespace

TEST_CASE("model shapes follow the active modality set") {
  Fixture f;
  for (const char* mods : {"tav", "ta", "v"}) {
    ModelConfig cfg = f.cfg;
    cfg.active = ModalitySet::parse(mods);
    HiccapModel<double> m(cfg);
    f.bind(m);
    ad::Tape<double> t(false);
    auto reps = m.represent(t, f.triplets);
    auto feats = m.fused_features(reps);
    CHECK(feats.rows() == 4);
    CHECK(feats.cols() == 8 * cfg.active.count());
    CHECK(m.binary_logits(t, feats, Mode::Eval).cols() == 2);
  }
}

TEST_CASE("absent text and masked channels use one zero timestep") {
  Fixture f;
  HiccapModel<float> m(f.cfg);
  ClipRecord c = f.clips[0];
  c.text.reset();
  c.text_source = TextSource::None;
  auto trip = m.triplet(c);
  CHECK(trip[0]->length() == 1);
  CHECK(trip[0]->data().isZero());
  auto masked = m.triplet(f.clips[1], ModalitySet::parse("av"));
  CHECK(masked[1]->length() == 1);
  CHECK(masked[2]->data().isZero());
  CHECK(masked[0] == &*f.clips[1].text);
}

TEST_CASE("parameter initialization depends only on the seed") {
  ModelConfig cfg = tiny_model_config();
  cfg.encoder.seed = 11;
  HiccapModel<float> a(cfg), b(cfg);
  for (std::size_t i = 0; i < a.params().params().size(); ++i)
    CHECK(a.params().params()[i].value == b.params().params()[i].value);
  cfg.encoder.seed = 12;
  HiccapModel<float> c(cfg);
  CHECK(a.params().find("enc.audio.fc.weight")->value != c.params().find("enc.audio.fc.weight")->value);
}

TEST_CASE("float and double models agree after copying parameters") {
  Fixture f;
  HiccapModel<float> mf(f.cfg);
  HiccapModel<double> md(f.cfg);
  md.copy_from(mf);
  f.bind(mf);
  ad::Tape<float> tf(false);
  MatrixF a = mf.fused_features(mf.represent(tf, f.triplets)).value();
  f.bind(md);
  ad::Tape<double> td(false);
  MatrixD b = md.fused_features(md.represent(td, f.triplets)).value();
  CHECK((a.cast<double>() - b).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fine-tuning loss gradients match central differences") {
  Fixture f;
  for (Task task : {Task::Multitask, Task::Binary}) {
    HiccapModel<double> m(f.cfg);
    f.bind(m);
    const BatchLabels gold = BatchLabels::of(f.ptrs);
    auto res = check_gradients<double>(m.params(), [&](ad::Tape<double>& t) {
      return finetune_loss(t, m, f.triplets, gold, task, Mode::Train);
    });
    INFO(to_string(task), " worst ", res.worst);
    CHECK(res.checked > 1000);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

TEST_CASE("pretraining loss gradients match central differences") {
  Fixture f;
  HiccapModel<double> m(f.cfg);
  f.bind(m);
  // Fixed corruption: sample 1 loses its video to sample 0; the rest stay aligned.
  CorruptedBatch batch;
  batch.records = f.triplets;
  batch.labels.assign(4, MatchLabels{1, 1, 1});
  batch.replaced.assign(4, std::nullopt);
  batch.records[1][2] = f.triplets[0][2];
  batch.replaced[1] = Replacement{Modality::Video, 0};
  batch.labels[1] = match_labels(Modality::Video);

  SUBCASE("matching") {
    auto res = check_gradients<double>(m.params(), [&](ad::Tape<double>& t) {
      return pretrain_losses(t, m, batch, true, false, Mode::Train).total;
    });
    INFO("worst ", res.worst);
    CHECK(res.max_rel_error <= 1e-4);
  }
  SUBCASE("contrastive") {
    auto res = check_gradients<double>(m.params(), [&](ad::Tape<double>& t) {
      return pretrain_losses(t, m, batch, false, true, Mode::Train).total;
    });
    INFO("worst ", res.worst);
    CHECK(res.max_rel_error <= 1e-4);
  }
}
