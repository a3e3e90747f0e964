// hiccap: command-line front end for dataset checks, synthetic data, pretraining,
// fine-tuning, evaluation and the modality probes.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "hiccap/checkpoint.hpp"
#include "hiccap/config.hpp"
#include "hiccap/ingest.hpp"
#include "hiccap/pretrain.hpp"
#include "hiccap/synth.hpp"
#include "hiccap/train_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hiccap;

namespace {

struct Options {
  std::string manifest, val_manifest, test_manifest;
  std::string config, checkpoint, out, task, ordering, mask, annotations, predictions;
  std::optional<std::uint64_t> seed;
  bool no_timestamps = false;
  // synth
  std::size_t n_train = 512, n_val = 128, n_test = 128;
  bool aligned = false;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": " + e.what());
  }
}

fs::path output_dir(const Options& o) {
  if (o.out.empty()) throw Error(ErrorKind::InvalidConfig, "--out is required for this command");
  fs::create_directories(o.out);
  return o.out;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream s;
  s << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Adds the provenance fields every report carries.
json stamped(json report, const Options& o) {
  if (!o.no_timestamps) report["created_at"] = timestamp();
  return report;
}

/// Built-in defaults, then the config file, then flags.
RunConfig effective_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_run_config(o.config, cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.task.empty()) cfg.task = task_from_string(o.task);
  if (!o.ordering.empty()) cfg.model.ordering = ModalityOrdering::parse(o.ordering);
  cfg.split.seed = cfg.seed;
  cfg.check();
  return cfg;
}

void echo_config(const fs::path& dir, const RunConfig& cfg) { write_json(dir / "config.json", cfg.to_json()); }

LoadedDataset load_required(const std::string& path, const char* flag) {
  if (path.empty()) throw Error(ErrorKind::InvalidConfig, std::string(flag) + " is required");
  return load_dataset(path);
}

bool all_labeled(const Dataset& clips) {
  return std::all_of(clips.begin(), clips.end(), [](const ClipRecord& c) { return c.labels.has_value(); });
}

/// Train/val/test from the explicit manifests when given, else a split of --manifest.
struct Data {
  FeatureDims dims;
  Dataset train, val, test;
};

Data load_partitions(const Options& o, const RunConfig& cfg) {
  LoadedDataset main = load_required(o.manifest, "--manifest");
  Data d{main.dims, {}, {}, {}};
  if (!o.val_manifest.empty()) {
    d.train = std::move(main.clips);
    LoadedDataset val = load_dataset(o.val_manifest);
    if (!(val.dims == d.dims)) throw Error(ErrorKind::DimMismatch, "validation manifest dims differ");
    d.val = std::move(val.clips);
    if (!o.test_manifest.empty()) {
      LoadedDataset test = load_dataset(o.test_manifest);
      if (!(test.dims == d.dims)) throw Error(ErrorKind::DimMismatch, "test manifest dims differ");
      d.test = std::move(test.clips);
    }
    return d;
  }
  PartitionSpec spec = cfg.split;
  spec.stratify = spec.stratify && all_labeled(main.clips);
  Partitions p = split_partitions(main.clips, spec);
  d.train = std::move(p.train);
  d.val = std::move(p.val);
  d.test = std::move(p.test);
  return d;
}

Task checkpoint_task(const Checkpoint& ckpt, const Options& o) {
  if (!o.task.empty()) return task_from_string(o.task);
  if (ckpt.metadata.contains("task")) return task_from_string(ckpt.metadata.at("task").get<std::string>());
  return Task::Multitask;
}

void print_metrics(std::ostream& out, const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v)
      s << std::fixed << std::setprecision(4) << *v;
    else
      s << "n/a";
    return s.str();
  };
  out << "task " << to_string(r.task) << ", " << r.n_clips << " clips";
  if (!r.masked.empty()) out << ", masked " << r.masked.to_string();
  out << "\n  loss " << std::fixed << std::setprecision(4) << r.loss << "  average accuracy " << r.average_accuracy
      << "\n";
  if (r.task == Task::Binary) {
    out << "  F1 " << opt(r.f1) << "  (tp " << r.confusion.tp << ", fp " << r.confusion.fp << ", fn " << r.confusion.fn
        << ", tn " << r.confusion.tn << ")\n";
    return;
  }
  for (int c = 0; c < kNumCategories; ++c)
    out << "  " << std::left << std::setw(16) << to_string(static_cast<Category>(c)) << std::right << " F1 "
        << opt(r.category_f1[c]) << "  accuracy " << r.category_accuracy[c] << "\n";
  out << "  macro F1 " << opt(r.macro_f1) << "\n";
}

json history_json(const FinetuneResult& r) {
  json h = json::array();
  for (const auto& e : r.history)
    h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"lr", e.lr}, {"selection", e.selection},
                 {"val", e.val.to_json()}});
  return h;
}

// ---------------------------------------------------------------------------------------------

int cmd_validate(const Options& o) {
  if (o.manifest.empty()) throw Error(ErrorKind::InvalidConfig, "--manifest is required");
  std::size_t count = 0;
  auto problems = check_dataset(o.manifest, &count);
  json report{{"manifest", o.manifest}, {"clips", count}, {"problems", json::array()}};
  for (const auto& p : problems) {
    report["problems"].push_back({{"clip_id", p.clip_id}, {"kind", to_string(p.kind)}, {"message", p.message}});
    // The message already starts with the error kind.
    std::cerr << (p.clip_id.empty() ? o.manifest : p.clip_id) << ": " << p.message << "\n";
  }
  if (count == 0 && problems.empty()) std::cerr << "warning: manifest lists no clips\n";
  if (!o.out.empty()) write_json(output_dir(o) / "validation.json", stamped(report, o));
  std::cout << count << " clips, " << problems.size() << " problems\n";
  return problems.empty() ? 0 : 2;
}

int cmd_stats(const Options& o) {
  LoadedDataset data = load_required(o.manifest, "--manifest");
  StatsTable table = dataset_stats(data.clips);
  write_stats_text(std::cout, table);
  if (!o.out.empty()) {
    std::ofstream csv(output_dir(o) / "stats.csv", std::ios::trunc);
    write_stats_csv(csv, table);
  } else {
    std::cout << "\n";
    write_stats_csv(std::cout, table);
  }
  return 0;
}

int cmd_synth(const Options& o) {
  const fs::path dir = output_dir(o);
  SynthSpec spec = SynthSpec::planted(o.seed.value_or(0));
  if (!o.config.empty()) {
    const json j = read_json(o.config);
    spec.noise = j.value("noise", spec.noise);
    spec.distractor = j.value("distractor", spec.distractor);
    spec.caption_fraction = j.value("caption_fraction", spec.caption_fraction);
    spec.text_absent_fraction = j.value("text_absent_fraction", spec.text_absent_fraction);
    spec.clips_per_video = j.value("clips_per_video", spec.clips_per_video);
  }
  SynthSplits s = o.aligned ? generate_aligned_splits(spec, o.n_train, o.n_val, o.n_test)
                            : generate_splits(spec, o.n_train, o.n_val, o.n_test);
  const std::pair<const char*, const Dataset*> parts[] = {{"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (auto [name, clips] : parts) {
    const fs::path manifest = save_dataset(dir / name, *clips, spec.dims);
    std::cout << name << ": " << clips->size() << " clips -> " << manifest.string() << "\n";
  }
  return 0;
}

int cmd_annotate(const Options& o) {
  if (o.annotations.empty()) throw Error(ErrorKind::InvalidConfig, "--annotations is required");
  auto sets = read_annotations(o.annotations);
  AgreementReport agreement = annotation_agreement(sets);
  std::map<std::string, LabelSet> voted;
  for (const auto& s : sets) voted.emplace(s.clip_id, majority_vote(s));

  json report{{"clips", sets.size()}, {"mean_kappa", agreement.mean_kappa}, {"annotators", json::array()}};
  for (const auto& a : agreement.per_annotator) {
    report["annotators"].push_back({{"annotator", a.annotator},
                                    {"clips", a.clips},
                                    {"kappa", a.stats.kappa},
                                    {"p_o", a.stats.p_o},
                                    {"p_e", a.stats.p_e}});
    std::cout << a.annotator << ": kappa " << a.stats.kappa << " over " << a.clips << " clips\n";
  }
  std::cout << "mean kappa " << agreement.mean_kappa << "\n";

  if (!o.out.empty()) {
    const fs::path dir = output_dir(o);
    write_json(dir / "agreement.json", stamped(report, o));
    if (!o.manifest.empty()) {
      // Labelled copy of the manifest; feature paths become absolute so the copy loads from anywhere.
      DatasetManifest m = read_manifest(o.manifest);
      const fs::path base = fs::absolute(fs::path(o.manifest)).parent_path();
      auto absolute = [&](std::string& p) {
        if (!p.empty()) p = (base / p).lexically_normal().string();
      };
      for (auto& e : m.clips) {
        if (e.text_path) absolute(*e.text_path);
        absolute(e.audio_path);
        absolute(e.video_path);
        auto it = voted.find(e.clip_id);
        if (it != voted.end()) e.labels = it->second;
      }
      write_manifest(dir / "manifest.json", m);
    }
  }
  return 0;
}

int cmd_pretrain(const Options& o) {
  RunConfig cfg = effective_config(o);
  const fs::path dir = output_dir(o);
  echo_config(dir, cfg);
  Data d = load_partitions(o, cfg);
  Model model(cfg.model_for(d.dims));
  PretrainResult r = run_pretraining(model, d.train, d.val.empty() ? d.train : d.val, cfg.pretrain_config(),
                                     [](const PretrainEpoch& e) {
                                       std::cout << "epoch " << e.epoch << "  train " << e.train_loss << "  val "
                                                 << e.val_loss << "  lr " << e.lr << "\n";
                                     });
  json history = json::array();
  for (const auto& e : r.history)
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_loss", e.val_loss},
                       {"lr", e.lr},
                       {"empty_aligned_batches", e.empty_aligned_batches}});
  json report{{"command", "pretrain"},
              {"objective", to_string(cfg.objective)},
              {"initial_val_loss", r.initial_val_loss},
              {"best_epoch", r.best_epoch},
              {"history", history}};
  write_json(dir / "report.json", stamped(report, o));
  write_checkpoint(dir / "pretrain.hckp", make_checkpoint(model, nullptr, {{"stage", "pretrain"}}));
  std::cout << "best epoch " << r.best_epoch << ", checkpoint " << (dir / "pretrain.hckp").string() << "\n";
  return 0;
}

/// Fine-tunes a fresh model (optionally initialized from --checkpoint) on the labelled budget.
struct FinetuneRun {
  FinetuneResult result;
  std::optional<MetricsReport> test;
};

FinetuneRun run_finetune(Model& model, const Data& d, const RunConfig& cfg, bool verbose) {
  const auto budget = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.label_fraction * static_cast<double>(d.train.size()))));
  const Dataset labelled(d.train.begin(), d.train.begin() + static_cast<std::ptrdiff_t>(std::min(budget, d.train.size())));
  FinetuneConfig fc = cfg.finetune_config();
  if (verbose)
    fc.on_epoch = [](const EpochRecord& e) {
      std::cout << "epoch " << e.epoch << "  train " << e.train_loss << "  val loss " << e.val.loss << "  selection "
                << e.selection << "\n";
    };
  FinetuneRun run;
  run.result = finetune(model, labelled, d.val, fc);
  if (!d.test.empty()) run.test = evaluate(model, d.test, cfg.task);
  return run;
}

int cmd_finetune(const Options& o) {
  RunConfig cfg = effective_config(o);
  const fs::path dir = output_dir(o);
  echo_config(dir, cfg);
  Data d = load_partitions(o, cfg);
  Model model(cfg.model_for(d.dims));
  if (!o.checkpoint.empty()) restore_checkpoint(read_checkpoint(o.checkpoint), model);
  FinetuneRun run = run_finetune(model, d, cfg, true);

  json report{{"command", "finetune"},
              {"task", to_string(cfg.task)},
              {"initialized_from", o.checkpoint.empty() ? json(nullptr) : json(o.checkpoint)},
              {"partitions", {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}}},
              {"best_epoch", run.result.best_epoch},
              {"steps", run.result.steps},
              {"history", history_json(run.result)}};
  if (run.test) {
    report["test"] = run.test->to_json();
    print_metrics(std::cout, *run.test);
  }
  write_json(dir / "report.json", stamped(report, o));
  write_checkpoint(dir / "model.hckp", make_checkpoint(model, nullptr, {{"stage", "finetune"}, {"task", to_string(cfg.task)}}));
  return 0;
}

/// Rebuilds a PredictionSet from the JSON written by `predict`.
PredictionSet predictions_from_json(const json& j) {
  PredictionSet p;
  try {
    p.task = task_from_string(j.at("task").get<std::string>());
    p.masked = ModalitySet::parse(j.value("masked", std::string()));
    const auto& clips = j.at("clips");
    const Index cols = p.task == Task::Binary ? 1 : kNumCategories;
    p.probs.resize(static_cast<Index>(clips.size()), cols);
    p.preds.resize(static_cast<Index>(clips.size()), cols);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto& c = clips[i];
      p.clip_ids.push_back(c.at("clip_id").get<std::string>());
      const auto& heads = c.at("probabilities");
      if (static_cast<Index>(heads.size()) != cols) throw Error(ErrorKind::SchemaMismatch, "wrong head count");
      for (Index k = 0; k < cols; ++k) {
        p.probs(static_cast<Index>(i), k) = heads[static_cast<std::size_t>(k)].at(1).get<double>();
        p.preds(static_cast<Index>(i), k) = c.at("predictions")[static_cast<std::size_t>(k)].get<int>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("predictions: ") + e.what());
  }
  return p;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorKind::InvalidConfig, "--checkpoint is required");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  auto model = load_model(ckpt);
  LoadedDataset data = load_required(o.manifest, "--manifest");
  MetricsReport r;
  if (!o.predictions.empty()) {
    PredictionSet p = predictions_from_json(read_json(o.predictions));
    for (std::size_t i = 0; i < data.clips.size() && i < p.clip_ids.size(); ++i)
      if (p.clip_ids[i] != data.clips[i].clip_id)
        throw Error(ErrorKind::SchemaMismatch, "predictions and manifest list clips in a different order");
    r = score_predictions(p, data.clips, *model);
  } else {
    r = evaluate(*model, data.clips, checkpoint_task(ckpt, o));
  }
  print_metrics(std::cout, r);
  if (!o.out.empty()) write_json(output_dir(o) / "eval.json", stamped(r.to_json(), o));
  return 0;
}

int cmd_mask_probe(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorKind::InvalidConfig, "--checkpoint is required");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  auto model = load_model(ckpt);
  LoadedDataset data = load_required(o.manifest, "--manifest");
  const Task task = checkpoint_task(ckpt, o);
  MetricsReport full = evaluate(*model, data.clips, task);
  MetricsReport masked = mask_probe(*model, data.clips, task, ModalitySet::parse(o.mask));
  std::cout << "unmasked:\n";
  print_metrics(std::cout, full);
  std::cout << "masked:\n";
  print_metrics(std::cout, masked);
  if (!o.out.empty())
    write_json(output_dir(o) / "mask_probe.json", stamped({{"unmasked", full.to_json()}, {"masked", masked.to_json()}}, o));
  return 0;
}

int cmd_sweep_ordering(const Options& o) {
  RunConfig cfg = effective_config(o);
  const fs::path dir = output_dir(o);
  echo_config(dir, cfg);
  Data d = load_partitions(o, cfg);
  struct Row {
    std::string ordering;
    double val_selection;
    int best_epoch;
    std::optional<MetricsReport> test;
    std::size_t rank_key;
  };
  std::vector<Row> rows;
  const auto orderings = ModalityOrdering::all();
  for (std::size_t i = 0; i < orderings.size(); ++i) {
    RunConfig c = cfg;
    c.model.ordering = orderings[i];
    Model model(c.model_for(d.dims));
    FinetuneRun run = run_finetune(model, d, c, false);
    const double sel =
        run.result.best_epoch > 0 ? run.result.history[static_cast<std::size_t>(run.result.best_epoch - 1)].selection : 0.0;
    rows.push_back({orderings[i].to_string(), sel, run.result.best_epoch, run.test, i});
    std::cerr << "ordering " << rows.back().ordering << ": val " << sel << "\n";
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.val_selection > b.val_selection; });

  json table = json::array();
  std::cout << "rank  ordering              val " << to_string(cfg.selection) << "   test\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row& row = rows[r];
    const double test_value = row.test ? selection_value(*row.test, cfg.selection) : 0.0;
    table.push_back({{"rank", r + 1},
                     {"ordering", row.ordering},
                     {"val_selection", row.val_selection},
                     {"best_epoch", row.best_epoch},
                     {"test", row.test ? row.test->to_json() : json(nullptr)}});
    std::cout << std::setw(4) << r + 1 << "  " << std::left << std::setw(20) << row.ordering << std::right << "  "
              << std::fixed << std::setprecision(4) << row.val_selection << "   "
              << (row.test ? std::to_string(test_value) : std::string("n/a")) << "\n";
  }
  write_json(dir / "sweep.json", stamped({{"command", "sweep-ordering"}, {"selection", to_string(cfg.selection)}, {"rows", table}}, o));
  return 0;
}

int cmd_predict(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorKind::InvalidConfig, "--checkpoint is required");
  const Checkpoint ckpt = read_checkpoint(o.checkpoint);
  auto model = load_model(ckpt);
  LoadedDataset data = load_required(o.manifest, "--manifest");
  const Task task = checkpoint_task(ckpt, o);
  const PredictionSet p = predict(*model, data.clips, task, ModalitySet::parse(o.mask));
  json clips = json::array();
  for (Index i = 0; i < p.probs.rows(); ++i) {
    json probs = json::array(), preds = json::array();
    for (Index k = 0; k < p.probs.cols(); ++k) {
      probs.push_back({1.0 - p.probs(i, k), p.probs(i, k)});
      preds.push_back(p.preds(i, k));
    }
    clips.push_back({{"clip_id", p.clip_ids[static_cast<std::size_t>(i)]}, {"probabilities", probs}, {"predictions", preds}});
  }
  json heads = json::array();
  if (task == Task::Binary)
    heads.push_back("binary");
  else
    for (int c = 0; c < kNumCategories; ++c) heads.push_back(to_string(static_cast<Category>(c)));
  json out = stamped({{"task", to_string(task)}, {"masked", p.masked.to_string()}, {"heads", heads}, {"clips", clips}}, o);
  if (o.out.empty())
    std::cout << out.dump(2) << "\n";
  else
    write_json(output_dir(o) / "predictions.json", out);
  return 0;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("HCA_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw Error(ErrorKind::InvalidConfig, "HCA_THREADS must be a positive integer");
    Eigen::setNbThreads(static_cast<int>(n));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal comic-mischief classifier: data checks, training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest", o.manifest, "dataset manifest (JSON)");
    sub->add_option("--config", o.config, "run config (JSON); flags override it");
    sub->add_option("--seed", o.seed, "root seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("--no-timestamps", o.no_timestamps, "omit wall-clock times from reports");
  };
  auto training = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--val-manifest", o.val_manifest, "validation manifest; without it --manifest is split");
    sub->add_option("--test-manifest", o.test_manifest, "test manifest, used with --val-manifest");
    sub->add_option("--task", o.task, "binary or multitask");
    sub->add_option("--ordering", o.ordering, "context ordering, e.g. t:av,a:tv,v:ta");
  };
  auto with_model = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    sub->add_option("--task", o.task, "binary or multitask (default: the checkpoint's task)");
  };

  std::map<CLI::App*, int (*)(const Options&)> handlers;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    handlers[sub] = fn;
    return sub;
  };

  common(add("validate", "check a manifest and its feature files", cmd_validate));
  common(add("stats", "per-class sequence statistics and category counts", cmd_stats));
  {
    auto* s = add("synth", "write planted synthetic train/val/test datasets", cmd_synth);
    common(s);
    s->add_option("--n-train", o.n_train);
    s->add_option("--n-val", o.n_val);
    s->add_option("--n-test", o.n_test);
    s->add_flag("--aligned", o.aligned, "unlabelled corpora with one shared latent per clip");
  }
  {
    auto* s = add("annotate", "majority-vote labels and annotator agreement", cmd_annotate);
    common(s);
    s->add_option("--annotations", o.annotations, "annotations JSON")->required();
  }
  training(add("pretrain", "self-supervised pretraining", cmd_pretrain));
  {
    auto* s = add("finetune", "supervised fine-tuning", cmd_finetune);
    training(s);
    s->add_option("--checkpoint", o.checkpoint, "initialize from this (pretraining) checkpoint");
  }
  {
    auto* s = add("eval", "evaluate a checkpoint", cmd_eval);
    with_model(s);
    s->add_option("--predictions", o.predictions, "score stored predictions instead of running the model");
  }
  {
    auto* s = add("mask-probe", "evaluate with modalities replaced by zero input", cmd_mask_probe);
    with_model(s);
    s->add_option("--mask", o.mask, "modalities to mask, letters from tav")->required();
  }
  training(add("sweep-ordering", "fine-tune once per context ordering and rank them", cmd_sweep_ordering));
  {
    auto* s = add("predict", "per-clip probabilities as JSON", cmd_predict);
    with_model(s);
    s->add_option("--mask", o.mask, "optional modalities to mask");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_thread_cap();
    for (auto* sub : app.get_subcommands()) return handlers.at(sub)(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
