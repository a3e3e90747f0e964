#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hiccap/checkpoint.hpp"
#include "hiccap/ingest.hpp"
#include "hiccap/pretrain.hpp"
#include "hiccap/train_eval.hpp"

namespace hiccap {

/// Everything a CLI command needs. JSON layout:
/// {"seed", "task", "selection", "label_fraction", "model": {...}, "optimizer": {...},
///  "pretrain": {"p", "objective", "schedule"}, "split": {"train", "val", "test", "stratify", "group_by_video"}}
struct RunConfig {
  std::uint64_t seed = 0;
  Task task = Task::Multitask;
  Selection selection = Selection::AverageAccuracy;
  double label_fraction = 1.0;  // share of the train partition whose labels are used for fine-tuning
  ModelConfig model;
  OptimizerConfig opt;
  double corruption_p = 0.5;
  PretrainObjective objective = PretrainObjective::Hybrid;
  PretrainSchedule schedule = PretrainSchedule::Summed;
  PartitionSpec split;

  /// Overlays the keys present in `j` onto this config.
  void merge(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void check() const;

  ModelConfig model_for(const FeatureDims& dims) const;
  FinetuneConfig finetune_config() const;
  PretrainConfig pretrain_config() const;
};

RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults = {});

}  // namespace hiccap
