#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiccap/ingest.hpp"
#include "hiccap/metrics.hpp"
#include "hiccap/model.hpp"
#include "hiccap/optimizer.hpp"

namespace hiccap {

enum class Task { Binary, Multitask };
/// Validation quantity used to pick the best fine-tuning epoch.
enum class Selection { AverageAccuracy, MacroF1 };

const char* to_string(Task t);
Task task_from_string(std::string_view s);
const char* to_string(Selection s);
Selection selection_from_string(std::string_view s);

/// Gold labels of a batch: the binary flag and one flag per category.
struct BatchLabels {
  std::vector<int> binary;
  std::array<std::vector<int>, kNumCategories> categories;

  static BatchLabels of(std::span<const ClipRecord* const> clips);
};

/// Training objective of one batch: cross-entropy of the binary head, or the
/// softplus-weighted sum of the four category cross-entropies.
template <class S>
ad::Var<S> finetune_loss(ad::Tape<S>& t, HiccapModel<S>& model, std::span<const ClipTriplet> batch,
                         const BatchLabels& gold, Task task, Mode mode) {
  auto reps = model.represent(t, batch);
  ad::Var<S> features = model.fused_features(reps);
  if (task == Task::Binary) return ad::softmax_cross_entropy(model.binary_logits(t, features, mode), gold.binary);
  auto logits = model.task_logits(t, features, mode);
  std::vector<ad::Var<S>> losses;
  for (int c = 0; c < kNumCategories; ++c) losses.push_back(ad::softmax_cross_entropy(logits[c], gold.categories[c]));
  return softplus_weighted_sum(t, losses, model.task_theta());
}

/// Positive-class probabilities per clip: one column for the binary task, four for multitask.
struct PredictionSet {
  Task task = Task::Multitask;
  ModalitySet masked{0};
  std::vector<std::string> clip_ids;
  MatrixD probs;
  /// argmax decisions, same shape as probs
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> preds;
};

PredictionSet predict(const Model& model, const Dataset& clips, Task task, ModalitySet masked = ModalitySet{0});

struct MetricsReport {
  Task task = Task::Multitask;
  ModalitySet masked{0};
  std::size_t n_clips = 0;
  double loss = 0.0;  // mean cross-entropy (binary) or mean weighted multitask objective
  // binary task
  std::optional<double> f1;
  Confusion confusion;
  // multitask; a category with neither gold nor predicted positives has no defined F1
  std::array<std::optional<double>, kNumCategories> category_f1{};
  std::array<double, kNumCategories> category_accuracy{};
  std::optional<double> macro_f1;
  /// binary accuracy, or the mean per-category accuracy
  double average_accuracy = 0.0;

  nlohmann::json to_json() const;
};

/// Metrics of stored predictions against the clips' gold labels (matched by position).
MetricsReport score_predictions(const PredictionSet& predictions, const Dataset& clips, const Model& model);

MetricsReport evaluate(const Model& model, const Dataset& clips, Task task);

/// Evaluation with the masked modalities replaced by their one-step zero sequence.
MetricsReport mask_probe(const Model& model, const Dataset& clips, Task task, ModalitySet masked);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  MetricsReport val;
  double selection = 0.0;
};

struct FinetuneConfig {
  Task task = Task::Multitask;
  OptimizerConfig opt;
  Selection selection = Selection::AverageAccuracy;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps (0: no limit).
  long max_steps = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FinetuneResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0: no epoch ran, the initial model is kept
  std::vector<double> step_losses;
  long steps = 0;
};

/// Trains in place; on return the model holds the parameters of the best validation epoch.
FinetuneResult finetune(Model& model, const Dataset& train, const Dataset& val, const FinetuneConfig& cfg,
                        AdamW<float>* optimizer = nullptr);

double selection_value(const MetricsReport& report, Selection selection);

}  // namespace hiccap
