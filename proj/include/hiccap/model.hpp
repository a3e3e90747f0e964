#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hiccap/data_model.hpp"
#include "hiccap/encoders.hpp"
#include "hiccap/hca.hpp"
#include "hiccap/heads_losses.hpp"

namespace hiccap {

/// Subset of {text, audio, video}; bit i is Modality i.
struct ModalitySet {
  unsigned bits = 0b111;

  bool has(Modality m) const { return (bits >> index_of(m)) & 1u; }
  int count() const { return ((bits >> 0) & 1u) + ((bits >> 1) & 1u) + ((bits >> 2) & 1u); }
  bool empty() const { return bits == 0; }
  std::vector<Modality> members() const {
    std::vector<Modality> out;
    for (Modality m : kModalities)
      if (has(m)) out.push_back(m);
    return out;
  }
  /// Letters from "tav", e.g. "ta".
  static ModalitySet parse(std::string_view letters) {
    ModalitySet s{0};
    for (char c : letters)
      if (c != ',' && c != ' ') s.bits |= 1u << index_of(modality_from_letter(c));
    return s;
  }
  std::string to_string() const {
    std::string s;
    for (Modality m : members()) s += modality_letter(m);
    return s;
  }
  bool operator==(const ModalitySet&) const = default;
};

struct ModelConfig {
  FeatureDims dims;
  EncoderConfig encoder;
  AttentionConfig attention;
  ModalityOrdering ordering = ModalityOrdering::cyclic();
  ModalitySet active;
  BatchNormConfig batch_norm;
  Index projection_dim = 0;  // 0 means d_model
  double temperature = 0.07;

  Index d_model() const { return encoder.d_model; }
  Index proj_width() const { return projection_dim > 0 ? projection_dim : encoder.d_model; }
};

/// Sequences of one clip, indexed by Modality. Pointers must outlive the forward pass.
using ClipTriplet = std::array<const FeatureSequence*, 3>;

template <class S>
struct BatchRepresentation {
  std::array<ad::Var<S>, 3> pooled;  // B x d per active modality, invalid otherwise
  ModalitySet active;
};

template <class S>
class HiccapModel {
 public:
  explicit HiccapModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.encoder.check();
    if (!cfg_.ordering.valid()) throw Error(ErrorKind::InvalidConfig, "invalid modality ordering");
    if (cfg_.active.empty()) throw Error(ErrorKind::InvalidConfig, "no active modality");
    if (!(cfg_.temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be > 0");
    const Index d = cfg_.d_model();
    const CounterRng rng = CounterRng(cfg_.encoder.seed).split("init");

    text_encoder_ = TextEncoder<S>(store_, "enc.text", cfg_.dims.text, cfg_.encoder, rng);
    audio_encoder_ = RecurrentEncoder<S>(store_, "enc.audio", cfg_.dims.audio, cfg_.encoder, rng);
    video_encoder_ = RecurrentEncoder<S>(store_, "enc.video", cfg_.dims.video, cfg_.encoder, rng);
    fusion_ = FusionParams<S>(store_, d, cfg_.attention, rng);

    const Index fused = d * cfg_.active.count();
    binary_head_ = MlpBlock<S>(store_, "head.binary", default_mlp_widths(fused, 2), rng, cfg_.batch_norm);
    for (int c = 0; c < kNumCategories; ++c)
      task_heads_[c] = MlpBlock<S>(store_, std::string("head.") + to_string(static_cast<Category>(c)),
                                   default_mlp_widths(fused, 2), rng, cfg_.batch_norm);
    task_theta_ = &store_.add_constant("loss.task_theta", 1, kNumCategories, S(0));

    for (int k = 0; k < 3; ++k)
      matching_heads_[k] = MlpBlock<S>(store_, std::string("match.") + to_string(static_cast<MatchTask>(k)),
                                       default_mlp_widths(2 * d, 2), rng, cfg_.batch_norm);
    matching_theta_ = &store_.add_constant("loss.matching_theta", 1, 3, S(0));

    for (int k = 0; k < 3; ++k)
      projections_[k] = MlpBlock<S>(store_, std::string("proj.") + to_string(static_cast<PairSpace>(k)),
                                    {d, d, d, cfg_.proj_width()}, rng, cfg_.batch_norm);
    contrastive_theta_ = &store_.add_constant("loss.contrastive_theta", 1, 3, S(0));

    for (Modality m : kModalities) zeros_[index_of(m)] = FeatureSequence::zeros(m, cfg_.dims.of(m));
  }

  HiccapModel(const HiccapModel&) = delete;
  HiccapModel& operator=(const HiccapModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }

  const TextEncoder<S>& text_encoder() const { return text_encoder_; }
  const RecurrentEncoder<S>& audio_encoder() const { return audio_encoder_; }
  const RecurrentEncoder<S>& video_encoder() const { return video_encoder_; }
  const FusionParams<S>& fusion() const { return fusion_; }
  const MlpBlock<S>& binary_head() const { return binary_head_; }
  const std::array<MlpBlock<S>, 4>& task_heads() const { return task_heads_; }
  const std::array<MlpBlock<S>, 3>& matching_heads() const { return matching_heads_; }
  const std::array<MlpBlock<S>, 3>& projections() const { return projections_; }
  ad::Param<S>& task_theta() { return *task_theta_; }
  ad::Param<S>& matching_theta() { return *matching_theta_; }
  ad::Param<S>& contrastive_theta() { return *contrastive_theta_; }
  const ad::Param<S>& task_theta() const { return *task_theta_; }
  const ad::Param<S>& matching_theta() const { return *matching_theta_; }
  const ad::Param<S>& contrastive_theta() const { return *contrastive_theta_; }

  /// Single all-zeros timestep used for absent text and for masked channels.
  const FeatureSequence& zero_sequence(Modality m) const { return zeros_[index_of(m)]; }

  ClipTriplet triplet(const ClipRecord& clip, ModalitySet masked = ModalitySet{0}) const {
    ClipTriplet t{clip.text ? &*clip.text : &zeros_[0], &clip.audio, &clip.video};
    for (Modality m : kModalities)
      if (masked.has(m)) t[index_of(m)] = &zeros_[index_of(m)];
    return t;
  }

  ad::Var<S> encode(ad::Tape<S>& t, const FeatureSequence& seq) const {
    detail::check_input(seq, seq.modality());
    if (seq.dim() != cfg_.dims.of(seq.modality()))
      throw Error(ErrorKind::DimMismatch, std::string(to_string(seq.modality())) + " input width");
    ad::Var<S> x = t.constant(seq.data().template cast<S>());
    switch (seq.modality()) {
      case Modality::Text: return text_encoder_(t, x);
      case Modality::Audio: return audio_encoder_(t, x);
      case Modality::Video: return video_encoder_(t, x);
    }
    return x;
  }

  /// Pooled 1 x d representation per active modality for one clip.
  std::array<ad::Var<S>, 3> represent_clip(ad::Tape<S>& t, const ClipTriplet& clip) const {
    std::array<ad::Var<S>, 3> enc;
    for (Modality m : cfg_.active.members()) {
      const FeatureSequence* seq = clip[index_of(m)];
      if (seq->modality() != m) throw Error(ErrorKind::WrongModality, std::string("slot ") + to_string(m));
      enc[index_of(m)] = encode(t, *seq);
    }
    const auto active = cfg_.active.members();
    if (active.size() == 3) return fuse(t, enc, cfg_.ordering, fusion_);

    std::array<ad::Var<S>, 3> out;
    if (active.size() == 2) {
      // Plain (single-stage) cross-attention between the two channels.
      for (int k = 0; k < 2; ++k) {
        Modality target = active[k], context = active[1 - k];
        auto att = fusion_.heads[index_of(target)].stage1(t, enc[index_of(target)], enc[index_of(context)]);
        out[index_of(target)] = fusion_.pools[index_of(target)](t, att.output).pooled;
      }
      return out;
    }
    Modality only = active.front();
    out[index_of(only)] = fusion_.pools[index_of(only)](t, enc[index_of(only)]).pooled;
    return out;
  }

  BatchRepresentation<S> represent(ad::Tape<S>& t, std::span<const ClipTriplet> batch) const {
    if (batch.empty()) throw Error(ErrorKind::EmptyPartition, "empty batch");
    std::array<std::vector<ad::Var<S>>, 3> rows;
    for (const auto& clip : batch) {
      auto r = represent_clip(t, clip);
      for (Modality m : cfg_.active.members()) rows[index_of(m)].push_back(r[index_of(m)]);
    }
    BatchRepresentation<S> out;
    out.active = cfg_.active;
    for (Modality m : cfg_.active.members()) out.pooled[index_of(m)] = ad::vcat(rows[index_of(m)]);
    return out;
  }

  /// Concatenation of the active pooled representations, in text-audio-video order.
  ad::Var<S> fused_features(const BatchRepresentation<S>& reps) const {
    std::vector<ad::Var<S>> parts;
    for (Modality m : reps.active.members()) parts.push_back(reps.pooled[index_of(m)]);
    return parts.size() == 1 ? parts.front() : ad::hcat(parts);
  }

  ad::Var<S> binary_logits(ad::Tape<S>& t, ad::Var<S> features, Mode mode) const {
    return binary_head_(t, features, mode);
  }

  std::array<ad::Var<S>, 4> task_logits(ad::Tape<S>& t, ad::Var<S> features, Mode mode) const {
    std::array<ad::Var<S>, 4> out;
    for (int c = 0; c < kNumCategories; ++c) out[c] = task_heads_[c](t, features, mode);
    return out;
  }

  /// Matching logits for VTM, VAM, ATM; requires all three modalities.
  std::array<ad::Var<S>, 3> matching_logits(ad::Tape<S>& t, const BatchRepresentation<S>& reps, Mode mode) const {
    require_trimodal();
    const auto& r = reps.pooled;
    const auto T = index_of(Modality::Text), A = index_of(Modality::Audio), V = index_of(Modality::Video);
    return {matching_heads_[0](t, ad::hcat<S>({r[V], r[T]}), mode),
            matching_heads_[1](t, ad::hcat<S>({r[V], r[A]}), mode),
            matching_heads_[2](t, ad::hcat<S>({r[A], r[T]}), mode)};
  }

  ContrastiveTerms<S> contrastive(ad::Tape<S>& t, const BatchRepresentation<S>& reps, Mode mode) {
    require_trimodal();
    const auto& r = reps.pooled;
    return contrastive_total(t, r[index_of(Modality::Audio)], r[index_of(Modality::Video)],
                             r[index_of(Modality::Text)], projections_, *contrastive_theta_,
                             static_cast<S>(cfg_.temperature), mode);
  }

  /// Copies every parameter and buffer by name, converting the scalar type.
  template <class T>
  void copy_from(const HiccapModel<T>& other) {
    for (auto& p : store_.params()) {
      const auto* src = other.params().find(p.name);
      if (!src || src->value.rows() != p.value.rows() || src->value.cols() != p.value.cols())
        throw Error(ErrorKind::ShapeMismatch, "parameter " + p.name + " missing or reshaped");
      p.value = src->value.template cast<S>();
    }
  }

  std::map<std::string, Matrix<S>> state() const {
    std::map<std::string, Matrix<S>> out;
    for (const auto& p : store_.params()) out.emplace(p.name, p.value);
    return out;
  }

  void load_state(const std::map<std::string, Matrix<S>>& state) {
    for (auto& p : store_.params()) {
      auto it = state.find(p.name);
      if (it == state.end() || it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
        throw Error(ErrorKind::ShapeMismatch, "state lacks parameter " + p.name);
      p.value = it->second;
    }
  }

 private:
  void require_trimodal() const {
    if (cfg_.active.count() != 3) throw Error(ErrorKind::InvalidConfig, "pretraining objectives need all modalities");
  }

  ModelConfig cfg_;
  ParamStore<S> store_;
  TextEncoder<S> text_encoder_;
  RecurrentEncoder<S> audio_encoder_, video_encoder_;
  FusionParams<S> fusion_;
  MlpBlock<S> binary_head_;
  std::array<MlpBlock<S>, 4> task_heads_;
  ad::Param<S>* task_theta_ = nullptr;
  std::array<MlpBlock<S>, 3> matching_heads_;
  ad::Param<S>* matching_theta_ = nullptr;
  std::array<MlpBlock<S>, 3> projections_;
  ad::Param<S>* contrastive_theta_ = nullptr;
  std::array<FeatureSequence, 3> zeros_{FeatureSequence::zeros(Modality::Text, 1),
                                        FeatureSequence::zeros(Modality::Audio, 1),
                                        FeatureSequence::zeros(Modality::Video, 1)};
};

using Model = HiccapModel<float>;

}  // namespace hiccap
