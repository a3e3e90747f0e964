#include "hiccap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>

#include "hiccap/rng.hpp"
#include "json_codec.hpp"

namespace hiccap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

FeatureSequence load_sequence(const fs::path& base, const std::string& rel, Modality expected, Index dim,
                              const std::string& clip_id) {
  fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw Error(ErrorKind::MissingFile, clip_id + ": " + p.string());
  FeatureSequence seq = [&] {
    try {
      return read_feature_file(p);
    } catch (const Error& e) {
      throw Error(e.kind(), clip_id + ": " + e.what());
    }
  }();
  if (seq.modality() != expected)
    throw Error(ErrorKind::SchemaMismatch, clip_id + ": " + p.string() + " holds " + to_string(seq.modality()) +
                                               " features, expected " + to_string(expected));
  if (seq.dim() != dim)
    throw Error(ErrorKind::DimMismatch, clip_id + ": " + to_string(expected) + " dim " + std::to_string(seq.dim()) +
                                            " != declared " + std::to_string(dim));
  return seq;
}

ClipRecord load_clip(const fs::path& base, const ManifestEntry& e, const FeatureDims& dims) {
  ClipRecord r;
  r.clip_id = e.clip_id;
  r.source_video_id = e.video_id;
  r.text_source = e.text_source;
  if (e.text_path) r.text = load_sequence(base, *e.text_path, Modality::Text, dims.text, e.clip_id);
  r.audio = load_sequence(base, e.audio_path, Modality::Audio, dims.audio, e.clip_id);
  r.video = load_sequence(base, e.video_path, Modality::Video, dims.video, e.clip_id);
  r.labels = e.labels;
  auto violations = validate_clip(r, dims);
  if (!violations.empty()) throw Error(ErrorKind::InvariantViolation, e.clip_id + ": " + violations.front());
  return r;
}

}  // namespace

LoadedDataset load_dataset(const fs::path& manifest_path) {
  DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  LoadedDataset out;
  out.dims = m.dims;
  out.clips.reserve(m.clips.size());
  for (const auto& e : m.clips) out.clips.push_back(load_clip(base, e, m.dims));
  return out;
}

std::vector<DatasetProblem> check_dataset(const fs::path& manifest_path, std::size_t* clip_count) {
  std::vector<DatasetProblem> problems;
  DatasetManifest m;
  try {
    m = read_manifest(manifest_path);
  } catch (const Error& e) {
    problems.push_back({"", e.kind(), e.what()});
    return problems;
  }
  if (clip_count) *clip_count = m.clips.size();
  const fs::path base = manifest_path.parent_path();
  for (const auto& e : m.clips) {
    try {
      ClipRecord r;
      r.clip_id = e.clip_id;
      r.text_source = e.text_source;
      if (e.text_path) r.text = load_sequence(base, *e.text_path, Modality::Text, m.dims.text, e.clip_id);
      r.audio = load_sequence(base, e.audio_path, Modality::Audio, m.dims.audio, e.clip_id);
      r.video = load_sequence(base, e.video_path, Modality::Video, m.dims.video, e.clip_id);
      r.labels = e.labels;
      for (auto& v : validate_clip(r, m.dims))
        problems.push_back({e.clip_id, ErrorKind::InvariantViolation, std::move(v)});
    } catch (const Error& err) {
      problems.push_back({e.clip_id, err.kind(), err.what()});
    }
  }
  return problems;
}

fs::path save_dataset(const fs::path& dir, const Dataset& clips, const FeatureDims& dims) {
  fs::create_directories(dir / "features");
  DatasetManifest m;
  m.dims = dims;
  for (const auto& c : clips) {
    ManifestEntry e;
    e.clip_id = c.clip_id;
    e.video_id = c.source_video_id;
    e.text_source = c.text_source;
    if (c.text) {
      e.text_path = "features/" + c.clip_id + ".text.hcmf";
      write_feature_file(dir / *e.text_path, *c.text);
    }
    e.audio_path = "features/" + c.clip_id + ".audio.hcmf";
    e.video_path = "features/" + c.clip_id + ".video.hcmf";
    write_feature_file(dir / e.audio_path, c.audio);
    write_feature_file(dir / e.video_path, c.video);
    e.labels = c.labels;
    m.clips.push_back(std::move(e));
  }
  fs::path manifest = dir / "manifest.json";
  write_manifest(manifest, m);
  return manifest;
}

LabelSet majority_vote(const AnnotationSet& ann) {
  const auto n = ann.votes.size();
  if (n == 0) throw Error(ErrorKind::InvariantViolation, ann.clip_id + ": no annotators");
  if (n % 2 == 0) throw Error(ErrorKind::EvenAnnotatorCount, ann.clip_id + ": " + std::to_string(n) + " annotators");
  const bool per_modality = ann.votes.front().labels.per_modality.has_value();
  for (const auto& v : ann.votes)
    if (v.labels.per_modality.has_value() != per_modality)
      throw Error(ErrorKind::InvariantViolation, ann.clip_id + ": vote records differ in shape");

  auto majority = [n](std::size_t ones) { return 2 * ones > n; };
  LabelSet out;
  if (per_modality) {
    PerModalityFlags pm{};
    for (int c = 0; c < kNumCategories; ++c) {
      for (int k = 0; k < 3; ++k) {
        std::size_t ones = 0;
        for (const auto& v : ann.votes) ones += (*v.labels.per_modality)[c][k];
        pm[c][k] = majority(ones);
      }
      out.categories[c] = pm[c][0] || pm[c][1] || pm[c][2];
    }
    out.per_modality = pm;
  } else {
    for (int c = 0; c < kNumCategories; ++c) {
      std::size_t ones = 0;
      for (const auto& v : ann.votes) ones += v.labels.categories[c];
      out.categories[c] = majority(ones);
    }
  }
  out.binary = derive_binary(out);
  return out;
}

std::vector<AnnotationSet> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::vector<AnnotationSet> out;
  try {
    json j = json::parse(in);
    const json& items = j.is_array() ? j : j.at("annotations");
    for (const json& item : items) {
      AnnotationSet a;
      a.clip_id = item.at("clip_id").get<std::string>();
      std::size_t k = 0;
      for (const json& v : item.at("votes")) {
        AnnotationVote vote;
        vote.annotator = v.value("annotator", "annotator_" + std::to_string(k));
        vote.labels = detail::labels_from_json(v.contains("labels") ? v.at("labels") : v);
        a.votes.push_back(std::move(vote));
        ++k;
      }
      out.push_back(std::move(a));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": " + ex.what());
  }
  return out;
}

namespace {
void append_flags(const LabelSet& l, std::vector<int>& out) {
  if (l.per_modality) {
    for (const auto& row : *l.per_modality)
      for (bool f : row) out.push_back(f);
  } else {
    for (bool f : l.categories) out.push_back(f);
  }
}
}  // namespace

AgreementReport annotation_agreement(const std::vector<AnnotationSet>& annotations) {
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> flags;
  std::map<std::string, std::size_t> clips;
  for (const auto& a : annotations) {
    LabelSet majority = majority_vote(a);
    for (const auto& v : a.votes) {
      auto& [mine, theirs] = flags[v.annotator];
      append_flags(v.labels, mine);
      append_flags(majority, theirs);
      ++clips[v.annotator];
    }
  }
  AgreementReport report;
  double sum = 0.0;
  for (const auto& [annotator, pair] : flags) {
    AnnotatorAgreement aa;
    aa.annotator = annotator;
    aa.clips = clips[annotator];
    aa.stats = cohens_kappa(pair.first, pair.second);
    sum += aa.stats.kappa;
    report.per_annotator.push_back(aa);
  }
  if (!report.per_annotator.empty()) report.mean_kappa = sum / static_cast<double>(report.per_annotator.size());
  return report;
}

void PartitionSpec::check() const {
  for (double r : {train, val, test})
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidConfig, "partition ratios must lie in [0,1]");
  if (std::abs(train + val + test - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidConfig, "partition ratios must sum to 1");
}

PartitionIndices split_indices(const Dataset& clips, const PartitionSpec& spec) {
  spec.check();
  const std::size_t n = clips.size();
  // Groups of clip indices that must land in one partition.
  std::vector<std::vector<std::size_t>> groups;
  if (spec.group_by_video) {
    std::map<std::string, std::size_t> by_video;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& key = clips[i].source_video_id.empty() ? clips[i].clip_id : clips[i].source_video_id;
      auto [it, inserted] = by_video.try_emplace(key, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  }

  // Stratum of a group: majority binary label of its clips (ties positive).
  std::array<std::vector<std::size_t>, 2> strata;
  std::array<std::size_t, 2> stratum_clips{};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::size_t pos = 0;
    for (auto i : groups[g]) pos += clips[i].labels && clips[i].labels->binary;
    int s = spec.stratify && 2 * pos >= groups[g].size() && pos > 0 ? 1 : 0;
    strata[s].push_back(g);
    stratum_clips[s] += groups[g].size();
  }

  const auto quota_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n) + 1e-9));
  const auto quota_test = static_cast<std::size_t>(std::floor(spec.test * static_cast<double>(n) + 1e-9));

  // Largest-remainder share of a global quota across the two strata.
  auto share = [&](std::size_t quota) {
    std::array<std::size_t, 2> q{};
    if (n == 0) return q;
    std::array<double, 2> exact{};
    std::size_t assigned = 0;
    for (int s = 0; s < 2; ++s) {
      exact[s] = static_cast<double>(quota) * static_cast<double>(stratum_clips[s]) / static_cast<double>(n);
      q[s] = static_cast<std::size_t>(std::floor(exact[s]));
      assigned += q[s];
    }
    while (assigned < quota) {
      int best = (exact[0] - std::floor(exact[0])) >= (exact[1] - std::floor(exact[1])) ? 0 : 1;
      if (q[best] >= stratum_clips[best]) best = 1 - best;
      ++q[best];
      exact[best] = std::floor(exact[best]);
      ++assigned;
    }
    return q;
  };
  const auto val_share = share(quota_val);
  const auto test_share = share(quota_test);

  CounterRng rng = CounterRng(spec.seed).split("split");
  PartitionIndices out;
  for (int s = 0; s < 2; ++s) {
    auto order = strata[s];
    CounterRng r = rng.split(static_cast<std::uint64_t>(s));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
    std::size_t need_test = test_share[s];
    std::size_t need_val = val_share[s];
    for (auto g : order) {
      auto& members = groups[g];
      std::vector<std::size_t>* target = &out.train;
      if (members.size() <= need_test) {
        target = &out.test;
        need_test -= members.size();
      } else if (members.size() <= need_val) {
        target = &out.val;
        need_val -= members.size();
      }
      target->insert(target->end(), members.begin(), members.end());
    }
  }
  for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

Partitions split_partitions(const Dataset& clips, const PartitionSpec& spec) {
  PartitionIndices idx = split_indices(clips, spec);
  Partitions p;
  for (auto i : idx.train) p.train.push_back(clips[i]);
  for (auto i : idx.val) p.val.push_back(clips[i]);
  for (auto i : idx.test) p.test.push_back(clips[i]);
  return p;
}

SequenceStat summarize(std::vector<double> values) {
  SequenceStat s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  s.avg = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

StatsTable dataset_stats(const Dataset& clips) {
  StatsTable table;
  std::array<std::array<std::vector<double>, 3>, 2> steps;
  for (const auto& c : clips) {
    if (!c.labels) throw Error(ErrorKind::NoLabels, c.clip_id);
    const int cls = c.labels->binary ? 1 : 0;
    ++table.by_class[cls].count;
    steps[cls][0].push_back(c.text ? static_cast<double>(c.text->length()) : 0.0);
    steps[cls][1].push_back(static_cast<double>(c.audio.length()));
    steps[cls][2].push_back(static_cast<double>(c.video.length()));
    bool any = false;
    for (int k = 0; k < kNumCategories; ++k) {
      if (c.labels->categories[k]) {
        ++table.category_counts[k];
        any = true;
      }
    }
    if (!any) ++table.none_count;
  }
  for (int cls = 0; cls < 2; ++cls) {
    table.by_class[cls].text_steps = summarize(steps[cls][0]);
    table.by_class[cls].audio_steps = summarize(steps[cls][1]);
    table.by_class[cls].video_steps = summarize(steps[cls][2]);
  }
  return table;
}

namespace {
struct NamedStat {
  const char* name;
  SequenceStat ClassStats::*field;
};
constexpr std::array<NamedStat, 3> kStatRows{{
    {"text_steps", &ClassStats::text_steps},
    {"audio_steps", &ClassStats::audio_steps},
    {"video_steps", &ClassStats::video_steps},
}};
}  // namespace

void write_stats_csv(std::ostream& out, const StatsTable& table) {
  out << "statistic,class,count,max,min,avg,median\n";
  for (const auto& row : kStatRows) {
    for (int cls = 0; cls < 2; ++cls) {
      const auto& cs = table.by_class[cls];
      const SequenceStat& s = cs.*row.field;
      out << row.name << ",C" << cls << ',' << cs.count << ',' << s.max << ',' << s.min << ',' << s.avg << ','
          << s.median << '\n';
    }
  }
  for (int k = 0; k < kNumCategories; ++k)
    out << "category," << to_string(static_cast<Category>(k)) << ',' << table.category_counts[k] << ",,,,\n";
  out << "category,none," << table.none_count << ",,,,\n";
}

void write_stats_text(std::ostream& out, const StatsTable& table) {
  out << std::left << std::setw(14) << "statistic" << std::setw(6) << "class" << std::right << std::setw(8)
      << "count" << std::setw(10) << "max" << std::setw(10) << "min" << std::setw(10) << "avg" << std::setw(10)
      << "median" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& row : kStatRows) {
    for (int cls = 0; cls < 2; ++cls) {
      const auto& cs = table.by_class[cls];
      const SequenceStat& s = cs.*row.field;
      out << std::left << std::setw(14) << row.name << std::setw(6) << ("C" + std::to_string(cls)) << std::right
          << std::setw(8) << cs.count << std::setw(10) << s.max << std::setw(10) << s.min << std::setw(10) << s.avg
          << std::setw(10) << s.median << '\n';
    }
  }
  out << "\ncategory histogram\n";
  for (int k = 0; k < kNumCategories; ++k)
    out << "  " << std::left << std::setw(16) << to_string(static_cast<Category>(k)) << std::right
        << table.category_counts[k] << '\n';
  out << "  " << std::left << std::setw(16) << "none" << std::right << table.none_count << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace hiccap
