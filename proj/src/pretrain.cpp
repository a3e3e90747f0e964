#include "hiccap/pretrain.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace hiccap {

void CorruptionConfig::check() const {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidConfig, "corruption.p must lie in [0, 1]");
}

std::vector<Index> CorruptedBatch::aligned() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < replaced.size(); ++i)
    if (!replaced[i]) out.push_back(static_cast<Index>(i));
  return out;
}

MatchLabels match_labels(std::optional<Modality> replaced) {
  if (!replaced) return {1, 1, 1};
  switch (*replaced) {
    case Modality::Video: return {0, 0, 1};
    case Modality::Audio: return {1, 0, 0};
    case Modality::Text: return {0, 1, 0};
  }
  return {1, 1, 1};
}

CorruptedBatch corrupt_batch(std::span<const ClipTriplet> batch, double p, CounterRng& rng) {
  CorruptedBatch out;
  const std::size_t n = batch.size();
  out.records.assign(batch.begin(), batch.end());
  out.labels.assign(n, MatchLabels{1, 1, 1});
  out.replaced.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = static_cast<Modality>(rng.below(3));
    const bool replace = rng.bernoulli(p);
    if (!replace || n < 2) continue;
    const std::size_t k = rng.below(n - 1);
    const std::size_t donor = k < i ? k : k + 1;
    out.records[i][index_of(m)] = batch[donor][index_of(m)];
    out.replaced[i] = Replacement{m, donor};
    out.labels[i] = match_labels(m);
  }
  return out;
}

const char* to_string(PretrainObjective o) {
  switch (o) {
    case PretrainObjective::Hybrid: return "hybrid";
    case PretrainObjective::MatchingOnly: return "matching";
    case PretrainObjective::ContrastiveOnly: return "contrastive";
  }
  return "?";
}

PretrainObjective objective_from_string(std::string_view s) {
  if (s == "hybrid") return PretrainObjective::Hybrid;
  if (s == "matching") return PretrainObjective::MatchingOnly;
  if (s == "contrastive") return PretrainObjective::ContrastiveOnly;
  throw Error(ErrorKind::InvalidConfig, "objective must be hybrid, matching or contrastive, got " + std::string(s));
}

const char* to_string(PretrainSchedule s) { return s == PretrainSchedule::Summed ? "summed" : "alternating"; }

PretrainSchedule schedule_from_string(std::string_view s) {
  if (s == "summed") return PretrainSchedule::Summed;
  if (s == "alternating") return PretrainSchedule::Alternating;
  throw Error(ErrorKind::InvalidConfig, "schedule must be summed or alternating, got " + std::string(s));
}

StepReport pretrain_step(Model& model, const CorruptedBatch& batch, bool with_matching, bool with_contrastive,
                         AdamW<float>& optimizer) {
  StepReport r;
  if (with_contrastive && !with_matching && batch.aligned().empty()) {
    r.empty_aligned = true;
    return r;
  }
  ad::Tape<float> t;
  auto losses = pretrain_losses(t, model, batch, with_matching, with_contrastive, Mode::Train);
  r.total = losses.total.scalar();
  if (!std::isfinite(r.total)) throw Error(ErrorKind::NonFiniteLoss, "pretraining loss " + std::to_string(r.total));
  if (losses.matching) r.matching = losses.matching->scalar();
  if (losses.contrastive) r.contrastive = losses.contrastive->scalar();
  for (int k = 0; k < 3; ++k) {
    if (losses.matching) r.match_tasks[k] = losses.match_tasks[k].scalar();
    if (losses.contrastive) r.pair_losses[k] = losses.pair_losses[k].scalar();
  }
  r.aligned = losses.aligned;
  r.empty_aligned = losses.empty_aligned;
  model.params().zero_grad();
  t.backward(losses.total);
  optimizer.step(model.params());
  r.applied = true;
  return r;
}

namespace {

struct Terms {
  bool matching;
  bool contrastive;
  double p;
};

Terms terms_for(const PretrainConfig& cfg) {
  switch (cfg.objective) {
    case PretrainObjective::Hybrid: return {true, true, cfg.corruption.p};
    case PretrainObjective::MatchingOnly: return {true, false, cfg.corruption.p};
    case PretrainObjective::ContrastiveOnly: return {false, true, 0.0};  // nothing to corrupt for NCE alone
  }
  return {true, true, cfg.corruption.p};
}

std::vector<ClipTriplet> triplets(const Model& model, const Dataset& clips, std::span<const std::size_t> order) {
  std::vector<ClipTriplet> out;
  for (std::size_t i : order) out.push_back(model.triplet(clips[i]));
  return out;
}

}  // namespace

double pretrain_validation_loss(Model& model, const Dataset& clips, const PretrainConfig& cfg) {
  if (clips.empty()) throw Error(ErrorKind::EmptyPartition, "pretraining validation partition is empty");
  const Terms terms = terms_for(cfg);
  const CounterRng root = CounterRng(cfg.corruption.seed).split("val-corruption");
  const auto bs = static_cast<std::size_t>(cfg.opt.batch_size);
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double sum = 0.0;
  for (std::size_t start = 0, b = 0; start < clips.size(); start += bs, ++b) {
    const std::size_t end = std::min(clips.size(), start + bs);
    auto batch = triplets(model, clips, std::span(order).subspan(start, end - start));
    CounterRng rng = root.split(static_cast<std::uint64_t>(b));
    CorruptedBatch cb = corrupt_batch(batch, terms.p, rng);
    if (!terms.matching && cb.aligned().empty()) continue;
    ad::Tape<float> t(false);
    auto losses = pretrain_losses(t, model, cb, terms.matching, terms.contrastive, Mode::Eval);
    sum += losses.total.scalar() * static_cast<double>(end - start);
  }
  return sum / static_cast<double>(clips.size());
}

PretrainResult run_pretraining(Model& model, const Dataset& train, const Dataset& val, const PretrainConfig& cfg,
                               const std::function<void(const PretrainEpoch&)>& on_epoch) {
  cfg.opt.check();
  cfg.corruption.check();
  if (model.config().active.count() != 3)
    throw Error(ErrorKind::InvalidConfig, "pretraining needs all three modalities active");
  PretrainResult result;
  if (cfg.opt.epochs == 0) return result;
  if (train.empty()) throw Error(ErrorKind::EmptyPartition, "pretraining train partition is empty");
  result.initial_val_loss = pretrain_validation_loss(model, val, cfg);

  const Terms terms = terms_for(cfg);
  AdamW<float> opt(cfg.opt);
  PlateauScheduler scheduler(cfg.opt);
  const CounterRng shuffle = CounterRng(cfg.corruption.seed).split("shuffle");
  const CounterRng corruption = CounterRng(cfg.corruption.seed).split("corruption");
  const auto bs = static_cast<std::size_t>(cfg.opt.batch_size);
  std::vector<std::size_t> order(train.size());
  double best = std::numeric_limits<double>::infinity();
  std::map<std::string, MatrixF> best_state;
  std::uint64_t batch_index = 0;

  for (int epoch = 1; epoch <= cfg.opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng r = shuffle.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);

    PretrainEpoch rec;
    rec.epoch = epoch;
    rec.lr = opt.lr();
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + bs);
      auto batch = triplets(model, train, std::span(order).subspan(start, end - start));
      CounterRng rng = corruption.split(batch_index);
      CorruptedBatch cb = corrupt_batch(batch, terms.p, rng);
      bool m = terms.matching, c = terms.contrastive;
      if (cfg.schedule == PretrainSchedule::Alternating && m && c) {
        m = batch_index % 2 == 0;
        c = !m;
      }
      StepReport step = pretrain_step(model, cb, m, c, opt);
      if (step.empty_aligned) ++rec.empty_aligned_batches;
      if (!step.applied) continue;
      result.step_losses.push_back(step.total);
      sum += step.total * static_cast<double>(end - start);
      counted += end - start;
    }
    rec.train_loss = counted ? sum / static_cast<double>(counted) : 0.0;
    rec.val_loss = pretrain_validation_loss(model, val, cfg);
    opt.set_lr(scheduler.observe(rec.val_loss, opt.lr()));
    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.best_epoch = epoch;
      best_state = model.state();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!best_state.empty()) model.load_state(best_state);
  return result;
}

}  // namespace hiccap
