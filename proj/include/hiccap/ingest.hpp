#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hiccap/data_model.hpp"
#include "hiccap/metrics.hpp"

namespace hiccap {

using Dataset = std::vector<ClipRecord>;

struct LoadedDataset {
  FeatureDims dims;
  Dataset clips;
};

/// Loads every clip of a manifest; feature paths resolve against the manifest's directory.
/// Throws MissingFile, SchemaMismatch, DimMismatch or InvariantViolation naming the clip.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

struct DatasetProblem {
  std::string clip_id;
  ErrorKind kind;
  std::string message;
};

/// Same checks as load_dataset, but collects every problem instead of stopping at the first.
std::vector<DatasetProblem> check_dataset(const std::filesystem::path& manifest_path,
                                          std::size_t* clip_count = nullptr);

/// Writes HCMF files for every clip under `dir` plus `dir/manifest.json`; returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const Dataset& clips,
                                   const FeatureDims& dims);

struct AnnotationVote {
  std::string annotator;
  LabelSet labels;
};

struct AnnotationSet {
  std::string clip_id;
  std::vector<AnnotationVote> votes;
};

/// Flag-wise strict majority. When votes carry per-modality flags, those are voted and the
/// categories are their OR, so the result always satisfies the LabelSet invariants.
LabelSet majority_vote(const AnnotationSet& ann);

std::vector<AnnotationSet> read_annotations(const std::filesystem::path& path);

struct AnnotatorAgreement {
  std::string annotator;
  std::size_t clips = 0;
  AgreementStats stats;
};

struct AgreementReport {
  std::vector<AnnotatorAgreement> per_annotator;
  double mean_kappa = 0.0;
};

/// Cohen's kappa of each annotator against the majority vote over all flags they labelled,
/// then the unweighted mean across annotators.
AgreementReport annotation_agreement(const std::vector<AnnotationSet>& annotations);

struct PartitionSpec {
  double train = 0.65;
  double val = 0.10;
  double test = 0.25;
  std::uint64_t seed = 0;
  bool stratify = true;
  bool group_by_video = true;

  void check() const;
};

struct PartitionIndices {
  std::vector<std::size_t> train, val, test;
};

PartitionIndices split_indices(const Dataset& clips, const PartitionSpec& spec);

struct Partitions {
  Dataset train, val, test;
};

Partitions split_partitions(const Dataset& clips, const PartitionSpec& spec);

struct SequenceStat {
  double max = 0, min = 0, avg = 0, median = 0;
};

struct ClassStats {
  std::size_t count = 0;
  SequenceStat text_steps;   // word-count proxy
  SequenceStat audio_steps;  // clip-length proxy
  SequenceStat video_steps;  // frame count
};

struct StatsTable {
  std::array<ClassStats, 2> by_class;  // C0, C1
  std::array<std::size_t, kNumCategories> category_counts{};
  std::size_t none_count = 0;
};

SequenceStat summarize(std::vector<double> values);
StatsTable dataset_stats(const Dataset& clips);
void write_stats_csv(std::ostream& out, const StatsTable& table);
void write_stats_text(std::ostream& out, const StatsTable& table);

}  // namespace hiccap
