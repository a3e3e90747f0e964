#include "hiccap/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hiccap/rng.hpp"

namespace hiccap {

using nlohmann::json;

const char* to_string(Task t) { return t == Task::Binary ? "binary" : "multitask"; }

Task task_from_string(std::string_view s) {
  if (s == "binary") return Task::Binary;
  if (s == "multitask") return Task::Multitask;
  throw Error(ErrorKind::InvalidConfig, "task must be binary or multitask, got " + std::string(s));
}

const char* to_string(Selection s) { return s == Selection::AverageAccuracy ? "average_accuracy" : "macro_f1"; }

Selection selection_from_string(std::string_view s) {
  if (s == "average_accuracy") return Selection::AverageAccuracy;
  if (s == "macro_f1") return Selection::MacroF1;
  throw Error(ErrorKind::InvalidConfig, "selection must be average_accuracy or macro_f1, got " + std::string(s));
}

BatchLabels BatchLabels::of(std::span<const ClipRecord* const> clips) {
  BatchLabels out;
  for (const ClipRecord* c : clips) {
    if (!c->labels) throw Error(ErrorKind::NoLabels, c->clip_id);
    out.binary.push_back(c->labels->binary ? 1 : 0);
    for (int k = 0; k < kNumCategories; ++k) out.categories[k].push_back(c->labels->categories[k] ? 1 : 0);
  }
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 64;

void require_nonempty(const Dataset& clips, const char* what) {
  if (clips.empty()) throw Error(ErrorKind::EmptyPartition, what);
}

std::vector<const ClipRecord*> pointers(const Dataset& clips, std::span<const std::size_t> order) {
  std::vector<const ClipRecord*> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(&clips[i]);
  return out;
}

}  // namespace

PredictionSet predict(const Model& model, const Dataset& clips, Task task, ModalitySet masked) {
  require_nonempty(clips, "predict: no clips");
  const Index cols = task == Task::Binary ? 1 : kNumCategories;
  PredictionSet out;
  out.task = task;
  out.masked = masked;
  out.probs.resize(static_cast<Index>(clips.size()), cols);
  out.preds.resize(static_cast<Index>(clips.size()), cols);
  for (std::size_t start = 0; start < clips.size(); start += kEvalChunk) {
    const std::size_t end = std::min(clips.size(), start + kEvalChunk);
    std::vector<ClipTriplet> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(model.triplet(clips[i], masked));
      out.clip_ids.push_back(clips[i].clip_id);
    }
    ad::Tape<float> t(false);
    auto features = model.fused_features(model.represent(t, batch));
    std::vector<MatrixF> logits;
    if (task == Task::Binary) {
      logits.push_back(model.binary_logits(t, features, Mode::Eval).value());
    } else {
      for (auto& v : model.task_logits(t, features, Mode::Eval)) logits.push_back(v.value());
    }
    for (Index c = 0; c < cols; ++c) {
      const MatrixF& z = logits[c];
      MatrixF p = ad::softmax_rows_value(z);
      for (Index r = 0; r < z.rows(); ++r) {
        const Index row = static_cast<Index>(start) + r;
        out.probs(row, c) = p(r, 1);
        // argmax; a tie goes to the first class
        out.preds(row, c) = z(r, 1) > z(r, 0) ? 1 : 0;
      }
    }
  }
  return out;
}

MetricsReport score_predictions(const PredictionSet& predictions, const Dataset& clips, const Model& model) {
  require_nonempty(clips, "score: no clips");
  if (static_cast<Index>(clips.size()) != predictions.probs.rows())
    throw Error(ErrorKind::LengthMismatch, "predictions and clips differ in count");
  MetricsReport r;
  r.task = predictions.task;
  r.masked = predictions.masked;
  r.n_clips = clips.size();
  std::vector<const ClipRecord*> ptrs;
  for (const auto& c : clips) ptrs.push_back(&c);
  const BatchLabels gold = BatchLabels::of(ptrs);
  const auto n = static_cast<double>(clips.size());

  auto column = [&](Index c) {
    std::vector<int> v(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) v[i] = predictions.preds(static_cast<Index>(i), c);
    return v;
  };
  auto mean_ce = [&](Index c, const std::vector<int>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p1 = predictions.probs(static_cast<Index>(i), c);
      s -= std::log(std::max(g[i] ? p1 : 1.0 - p1, 1e-300));
    }
    return s / n;
  };

  if (predictions.task == Task::Binary) {
    const auto p = column(0);
    r.confusion = confusion(p, gold.binary);
    if (r.confusion.tp + r.confusion.fp + r.confusion.fn > 0) r.f1 = f1(p, gold.binary);
    r.average_accuracy = accuracy(p, gold.binary);
    r.loss = mean_ce(0, gold.binary);
    return r;
  }
  double f1_sum = 0.0, acc_sum = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto p = column(c);
    const Confusion cf = confusion(p, gold.categories[c]);
    if (cf.tp + cf.fp + cf.fn > 0) {
      r.category_f1[c] = f1(p, gold.categories[c]);
      f1_sum += *r.category_f1[c];
      ++defined;
    }
    r.category_accuracy[c] = accuracy(p, gold.categories[c]);
    acc_sum += r.category_accuracy[c];
    r.loss += ad::softplus_value(static_cast<double>(model.task_theta().value(0, c))) * mean_ce(c, gold.categories[c]);
  }
  if (defined > 0) r.macro_f1 = f1_sum / defined;
  r.average_accuracy = acc_sum / kNumCategories;
  return r;
}

MetricsReport evaluate(const Model& model, const Dataset& clips, Task task) {
  return score_predictions(predict(model, clips, task), clips, model);
}

MetricsReport mask_probe(const Model& model, const Dataset& clips, Task task, ModalitySet masked) {
  if (masked.empty()) throw Error(ErrorKind::EmptyMask, "mask must name at least one modality");
  if (masked.count() == 3) throw Error(ErrorKind::AllMasked, "masking every modality leaves no input");
  return score_predictions(predict(model, clips, task, masked), clips, model);
}

json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j{{"task", to_string(task)}, {"n_clips", n_clips}, {"loss", loss}, {"average_accuracy", average_accuracy}};
  if (!masked.empty()) j["masked"] = masked.to_string();
  if (task == Task::Binary) {
    j["f1"] = opt(f1);
    j["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tn", confusion.tn}};
  } else {
    json per = json::object();
    for (int c = 0; c < kNumCategories; ++c)
      per[to_string(static_cast<Category>(c))] = {{"f1", opt(category_f1[c])}, {"accuracy", category_accuracy[c]}};
    j["categories"] = per;
    j["macro_f1"] = opt(macro_f1);
  }
  return j;
}

double selection_value(const MetricsReport& report, Selection selection) {
  if (selection == Selection::AverageAccuracy) return report.average_accuracy;
  const auto& v = report.task == Task::Binary ? report.f1 : report.macro_f1;
  return v.value_or(0.0);
}

FinetuneResult finetune(Model& model, const Dataset& train, const Dataset& val, const FinetuneConfig& cfg,
                        AdamW<float>* optimizer) {
  cfg.opt.check();
  FinetuneResult result;
  if (cfg.opt.epochs == 0) return result;
  require_nonempty(train, "finetune: empty train partition");
  require_nonempty(val, "finetune: empty validation partition");
  for (const auto& c : train)
    if (!c.labels) throw Error(ErrorKind::NoLabels, c.clip_id);

  AdamW<float> local(cfg.opt);
  AdamW<float>& opt = optimizer ? *optimizer : local;
  PlateauScheduler scheduler(cfg.opt);
  const CounterRng shuffle = CounterRng(cfg.seed).split("shuffle");

  double best = -std::numeric_limits<double>::infinity();
  std::map<std::string, MatrixF> best_state;
  std::vector<std::size_t> order(train.size());
  const auto batch_size = static_cast<std::size_t>(cfg.opt.batch_size);

  for (int epoch = 1; epoch <= cfg.opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng r = shuffle.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + batch_size);
      auto clips = pointers(train, std::span(order).subspan(start, end - start));
      std::vector<ClipTriplet> batch;
      for (const ClipRecord* c : clips) batch.push_back(model.triplet(*c));

      ad::Tape<float> t;
      ad::Var<float> loss = finetune_loss(t, model, batch, BatchLabels::of(clips), cfg.task, Mode::Train);
      const double value = loss.scalar();
      if (!std::isfinite(value))
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " step " +
                                                  std::to_string(result.steps + 1) + ": loss " + std::to_string(value));
      model.params().zero_grad();
      t.backward(loss);
      opt.step(model.params());
      ++result.steps;
      result.step_losses.push_back(value);
      loss_sum += value * static_cast<double>(clips.size());
      seen += clips.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.lr = opt.lr();
    rec.val = evaluate(model, val, cfg.task);
    rec.selection = selection_value(rec.val, cfg.selection);
    opt.set_lr(scheduler.observe(rec.val.loss, opt.lr()));
    if (rec.selection > best) {
      best = rec.selection;
      result.best_epoch = epoch;
      best_state = model.state();
    }
    result.history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
    if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
  }
  if (!best_state.empty()) model.load_state(best_state);
  return result;
}

}  // namespace hiccap
