#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hiccap/ingest.hpp"

namespace hiccap {

/// Where a category's evidence lives in one modality.
struct SignalChannel {
  Modality modality;
  std::vector<Index> dims;
};

/// A category is positive iff, for every channel, the mean of the channel's dims over all
/// timesteps exceeds `threshold`. One channel per category except joint categories.
struct CategorySignal {
  Category category;
  std::vector<SignalChannel> channels;
  double threshold = 0.0;
  double strength = 1.0;    // magnitude of the injected activation
  double prevalence = 0.35;  // target positive rate
};

struct SynthSpec {
  std::size_t n_clips = 512;
  FeatureDims dims{32, 16, 24};
  std::array<std::pair<Index, Index>, 3> lengths{{{4, 12}, {4, 12}, {4, 12}}};  // inclusive T range per modality
  std::uint64_t seed = 0;
  std::vector<CategorySignal> signals;
  double noise = 0.5;       // per-timestep Gaussian noise on every dim
  double distractor = 1.0;  // per-clip constant Gaussian offset on dims that carry no signal
  double jitter = 0.5;      // activation magnitude is strength * (1 + jitter * U[-1, 1])
  std::size_t clips_per_video = 4;
  double caption_fraction = 0.0;    // share of clips whose text comes from captions
  double text_absent_fraction = 0.0;  // share of clips without any text
  Index latent_dim = 8;              // aligned corpora only
  std::string id_prefix = "clip";

  /// Sarcasm in text, slapstick in audio, gory humor in video, mature humor jointly in text and audio.
  static SynthSpec planted(std::uint64_t seed = 0);
  void check() const;
};

/// Labeled clips following the planted rules; labels are computed from the final features.
Dataset generate(const SynthSpec& spec);

/// Labels implied by the features of `clip` under `spec` (absent text counts as zeros).
LabelSet planted_labels(const ClipRecord& clip, const SynthSpec& spec);

struct SynthSplits {
  Dataset train, val, test;
};

/// Three independent draws (sub-streams "train", "val", "test") of the same spec.
SynthSplits generate_splits(const SynthSpec& spec, std::size_t n_train, std::size_t n_val, std::size_t n_test);

/// Unlabeled corpus: per clip one latent vector z, and every timestep of modality m is
/// E_m z + noise, where E_m writes into the modality's signal dims. Distractor offsets and
/// noise are added on top, so cross-modal correspondence exists only through z.
Dataset generate_aligned_corpus(const SynthSpec& spec);

/// Aligned corpora for three partitions that share one embedding (taken from spec.seed);
/// only the per-clip draws differ.
SynthSplits generate_aligned_splits(const SynthSpec& spec, std::size_t n_train, std::size_t n_val,
                                    std::size_t n_test);

/// The fixed embedding E_m (dims(m) x latent_dim) used by generate_aligned_corpus.
MatrixD aligned_embedding(const SynthSpec& spec, Modality m);

}  // namespace hiccap
