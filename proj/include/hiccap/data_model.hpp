#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hiccap/tensor.hpp"

namespace hiccap {

enum class Modality : std::uint8_t { Text = 0, Audio = 1, Video = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::Text, Modality::Audio, Modality::Video};

enum class Category : std::uint8_t { MatureHumor = 0, GoryHumor = 1, SlapstickHumor = 2, Sarcasm = 3 };
inline constexpr int kNumCategories = 4;

enum class TextSource : std::uint8_t { Subtitle, Caption, None };

const char* to_string(Modality m);
const char* to_string(Category c);
const char* to_string(TextSource s);
char modality_letter(Modality m);
Modality modality_from_letter(char c);
TextSource text_source_from_string(std::string_view s);

inline int index_of(Modality m) { return static_cast<int>(m); }

/// Time-major feature matrix (T x D) of one modality.
class FeatureSequence {
 public:
  FeatureSequence(Modality modality, MatrixF data) : modality_(modality), data_(std::move(data)) {}

  Modality modality() const { return modality_; }
  Index length() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  const MatrixF& data() const { return data_; }

  /// The single all-zeros timestep standing in for an absent or masked channel.
  static FeatureSequence zeros(Modality modality, Index dim) {
    return FeatureSequence(modality, MatrixF::Zero(1, dim));
  }

 private:
  Modality modality_;
  MatrixF data_;
};

using PerModalityFlags = std::array<std::array<bool, 3>, kNumCategories>;

struct LabelSet {
  std::array<bool, kNumCategories> categories{};
  bool binary = false;
  /// category x {Dialogue, Sound, Video}
  std::optional<PerModalityFlags> per_modality;

  static LabelSet from_categories(const std::array<bool, kNumCategories>& cats);
  bool operator==(const LabelSet&) const = default;
};

bool derive_binary(const LabelSet& labels);

struct FeatureDims {
  Index text = 768;
  Index audio = 128;
  Index video = 1024;

  Index of(Modality m) const;
  bool operator==(const FeatureDims&) const = default;
};

struct ClipRecord {
  std::string clip_id;
  std::string source_video_id;
  std::optional<FeatureSequence> text;
  TextSource text_source = TextSource::None;
  FeatureSequence audio{Modality::Audio, MatrixF::Zero(1, 1)};
  FeatureSequence video{Modality::Video, MatrixF::Zero(1, 1)};
  std::optional<LabelSet> labels;

  /// Text channel as consumed by fusion: the stored sequence, or one zero row.
  FeatureSequence text_or_zeros(Index text_dim) const;
};

/// For each target modality, the two context modalities in processing order.
struct ModalityOrdering {
  std::array<std::pair<Modality, Modality>, 3> contexts;

  const std::pair<Modality, Modality>& for_target(Modality target) const {
    return contexts[index_of(target)];
  }

  /// text <- (audio, video), audio <- (text, video), video <- (text, audio)
  static ModalityOrdering standard();
  /// text <- (video, audio), audio <- (text, video), video <- (audio, text): every modality is
  /// the second-stage context of exactly one target, so each one's values reach a pooled output.
  static ModalityOrdering cyclic();
  /// All 8 orderings (two per target), in a fixed enumeration order.
  static std::vector<ModalityOrdering> all();
  /// Format "t:av,a:tv,v:ta"; targets left out keep their cyclic() contexts.
  static ModalityOrdering parse(std::string_view text);
  std::string to_string() const;
  bool valid() const;
  bool operator==(const ModalityOrdering&) const = default;
};

/// Every violated invariant, each message naming the field and the rule.
std::vector<std::string> validate_clip(const ClipRecord& record, const FeatureDims& dims);

struct ManifestEntry {
  std::string clip_id;
  std::string video_id;
  std::optional<std::string> text_path;
  TextSource text_source = TextSource::None;
  std::string audio_path;
  std::string video_path;
  std::optional<LabelSet> labels;
};

struct DatasetManifest {
  int version = 1;
  FeatureDims dims;
  std::vector<ManifestEntry> clips;
};

// HCMF feature files: "HCMF", u32 version, u8 modality, u32 T, u32 D, T*D float32, little-endian.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_feature_file(const std::filesystem::path& path);

inline constexpr int kManifestVersion = 1;
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

}  // namespace hiccap
