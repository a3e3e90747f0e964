#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiccap/ingest.hpp"
#include "hiccap/model.hpp"
#include "hiccap/optimizer.hpp"
#include "hiccap/rng.hpp"

namespace hiccap {

struct CorruptionConfig {
  double p = 0.5;
  std::uint64_t seed = 0;

  void check() const;
};

struct Replacement {
  Modality modality;
  std::size_t donor;
};

/// Matching labels (vtm, vam, atm) of one sample.
using MatchLabels = std::array<int, 3>;

struct CorruptedBatch {
  std::vector<ClipTriplet> records;
  std::vector<MatchLabels> labels;
  std::vector<std::optional<Replacement>> replaced;

  /// Indices of samples that kept all three original channels.
  std::vector<Index> aligned() const;
};

/// Labels after replacing `m` (or nothing): the two tasks that involve `m` become 0.
MatchLabels match_labels(std::optional<Modality> replaced);

/// Per sample, in order: modality = below(3), then bernoulli(p), then, only when replacing,
/// k = below(N - 1) with donor = k < i ? k : k + 1. With N = 1 nothing is replaced.
/// Donors are referenced, never modified.
CorruptedBatch corrupt_batch(std::span<const ClipTriplet> batch, double p, CounterRng& rng);

enum class PretrainObjective { Hybrid, MatchingOnly, ContrastiveOnly };
/// Summed: one step on matching + contrastive. Alternating: even steps matching, odd steps contrastive.
enum class PretrainSchedule { Summed, Alternating };

const char* to_string(PretrainObjective o);
PretrainObjective objective_from_string(std::string_view s);
const char* to_string(PretrainSchedule s);
PretrainSchedule schedule_from_string(std::string_view s);

template <class S>
struct PretrainLosses {
  ad::Var<S> total;
  std::optional<ad::Var<S>> matching;
  std::array<ad::Var<S>, 3> match_tasks;  // VTM, VAM, ATM cross-entropies
  std::optional<ad::Var<S>> contrastive;
  std::array<ad::Var<S>, 3> pair_losses;  // AV, AT, VT NCE values
  std::size_t aligned = 0;
  bool empty_aligned = false;
};

/// Builds the requested terms on one tape. The contrastive term only sees the samples that are
/// still fully aligned; when there are none it is skipped and `empty_aligned` is set.
template <class S>
PretrainLosses<S> pretrain_losses(ad::Tape<S>& t, HiccapModel<S>& model, const CorruptedBatch& batch,
                                  bool with_matching, bool with_contrastive, Mode mode) {
  if (!with_matching && !with_contrastive) throw Error(ErrorKind::InvalidConfig, "no pretraining term selected");
  PretrainLosses<S> out;
  auto reps = model.represent(t, batch.records);
  std::vector<ad::Var<S>> terms;
  if (with_matching) {
    auto logits = model.matching_logits(t, reps, mode);
    std::vector<ad::Var<S>> losses;
    for (int k = 0; k < 3; ++k) {
      std::vector<int> gold;
      for (const auto& l : batch.labels) gold.push_back(l[k]);
      out.match_tasks[k] = ad::softmax_cross_entropy(logits[k], gold);
      losses.push_back(out.match_tasks[k]);
    }
    out.matching = softplus_weighted_sum(t, losses, model.matching_theta());
    terms.push_back(*out.matching);
  }
  if (with_contrastive) {
    const auto keep = batch.aligned();
    out.aligned = keep.size();
    out.empty_aligned = keep.empty();
    if (!keep.empty()) {
      BatchRepresentation<S> sub = reps;
      if (keep.size() != batch.records.size())
        for (Modality m : kModalities) sub.pooled[index_of(m)] = ad::select_rows(reps.pooled[index_of(m)], keep);
      auto terms_c = model.contrastive(t, sub, mode);
      out.contrastive = terms_c.total;
      out.pair_losses = terms_c.pair_losses;
      terms.push_back(terms_c.total);
    }
  }
  if (terms.empty()) throw Error(ErrorKind::InvalidConfig, "no aligned sample for a contrastive-only step");
  out.total = terms.size() == 1 ? terms.front() : ad::add(terms[0], terms[1]);
  return out;
}

struct StepReport {
  double total = 0.0;
  std::optional<double> matching;
  std::optional<double> contrastive;
  std::array<double, 3> match_tasks{};
  std::array<double, 3> pair_losses{};
  std::size_t aligned = 0;
  bool empty_aligned = false;
  bool applied = false;  // false when the step had nothing to optimize
};

/// One optimizer step on the requested terms (train mode).
StepReport pretrain_step(Model& model, const CorruptedBatch& batch, bool with_matching, bool with_contrastive,
                         AdamW<float>& optimizer);

struct PretrainConfig {
  CorruptionConfig corruption;
  OptimizerConfig opt;
  PretrainObjective objective = PretrainObjective::Hybrid;
  PretrainSchedule schedule = PretrainSchedule::Summed;
};

struct PretrainEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  std::size_t empty_aligned_batches = 0;
};

struct PretrainResult {
  double initial_val_loss = 0.0;
  std::vector<PretrainEpoch> history;
  int best_epoch = 0;  // 0: no epoch ran
  std::vector<double> step_losses;
};

/// Mean total pretraining loss over `clips` in eval mode, with a corruption stream that
/// depends only on the seed so values are comparable across epochs.
double pretrain_validation_loss(Model& model, const Dataset& clips, const PretrainConfig& cfg);

/// Trains in place; on return the model holds the parameters with the lowest validation loss.
PretrainResult run_pretraining(Model& model, const Dataset& train, const Dataset& val, const PretrainConfig& cfg,
                               const std::function<void(const PretrainEpoch&)>& on_epoch = {});

}  // namespace hiccap
