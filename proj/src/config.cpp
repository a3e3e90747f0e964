#include "hiccap/config.hpp"

#include <fstream>

namespace hiccap {

using nlohmann::json;

void RunConfig::merge(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  try {
    seed = j.value("seed", seed);
    if (j.contains("task")) task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("selection")) selection = selection_from_string(j.at("selection").get<std::string>());
    label_fraction = j.value("label_fraction", label_fraction);
    if (j.contains("model")) model = model_config_from_json(j.at("model"), model);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      opt.lr = o.value("lr", opt.lr);
      opt.weight_decay = o.value("weight_decay", opt.weight_decay);
      opt.beta1 = o.value("beta1", opt.beta1);
      opt.beta2 = o.value("beta2", opt.beta2);
      opt.eps = o.value("eps", opt.eps);
      opt.factor = o.value("factor", opt.factor);
      opt.patience = o.value("patience", opt.patience);
      opt.min_lr = o.value("min_lr", opt.min_lr);
      opt.batch_size = o.value("batch_size", opt.batch_size);
      opt.epochs = o.value("epochs", opt.epochs);
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      corruption_p = p.value("p", corruption_p);
      if (p.contains("objective")) objective = objective_from_string(p.at("objective").get<std::string>());
      if (p.contains("schedule")) schedule = schedule_from_string(p.at("schedule").get<std::string>());
      if (p.contains("temperature")) model.temperature = p.at("temperature").get<double>();
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      split.train = s.value("train", split.train);
      split.val = s.value("val", split.val);
      split.test = s.value("test", split.test);
      split.stratify = s.value("stratify", split.stratify);
      split.group_by_video = s.value("group_by_video", split.group_by_video);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"task", to_string(task)},
      {"selection", to_string(selection)},
      {"label_fraction", label_fraction},
      {"model", model_config_to_json(model)},
      {"optimizer",
       {{"lr", opt.lr},
        {"weight_decay", opt.weight_decay},
        {"beta1", opt.beta1},
        {"beta2", opt.beta2},
        {"eps", opt.eps},
        {"factor", opt.factor},
        {"patience", opt.patience},
        {"min_lr", opt.min_lr},
        {"batch_size", opt.batch_size},
        {"epochs", opt.epochs}}},
      {"pretrain",
       {{"p", corruption_p},
        {"objective", to_string(objective)},
        {"schedule", to_string(schedule)},
        {"temperature", model.temperature}}},
      {"split",
       {{"train", split.train},
        {"val", split.val},
        {"test", split.test},
        {"stratify", split.stratify},
        {"group_by_video", split.group_by_video}}},
  };
}

void RunConfig::check() const {
  opt.check();
  CorruptionConfig{corruption_p, seed}.check();
  if (!(label_fraction > 0.0 && label_fraction <= 1.0))
    throw Error(ErrorKind::InvalidConfig, "label_fraction must lie in (0, 1]");
  split.check();
}

ModelConfig RunConfig::model_for(const FeatureDims& dims) const {
  ModelConfig m = model;
  m.dims = dims;
  m.encoder.seed = seed;
  return m;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig f;
  f.task = task;
  f.opt = opt;
  f.selection = selection;
  f.seed = seed;
  return f;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p;
  p.corruption = {corruption_p, seed};
  p.opt = opt;
  p.objective = objective;
  p.schedule = schedule;
  return p;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  defaults.merge(j);
  return defaults;
}

}  // namespace hiccap
