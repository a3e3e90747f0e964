#include "hiccap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "hiccap/rng.hpp"

namespace hiccap {

namespace {

std::vector<Index> range(Index from, Index count) {
  std::vector<Index> v(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = from + i;
  return v;
}

std::string numbered(const std::string& prefix, const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%s%05zu", kind, i);
  return prefix + buf;
}

/// Dims of modality m that carry a planted signal (sorted, unique).
std::vector<Index> signal_dims(const SynthSpec& spec, Modality m) {
  std::set<Index> s;
  for (const auto& sig : spec.signals)
    for (const auto& ch : sig.channels)
      if (ch.modality == m) s.insert(ch.dims.begin(), ch.dims.end());
  return {s.begin(), s.end()};
}

struct ClipShape {
  std::array<Index, 3> length;
  TextSource text_source;
};

ClipShape draw_shape(const SynthSpec& spec, const CounterRng& clip_rng) {
  ClipShape shape;
  CounterRng r = clip_rng.split("length");
  for (Modality m : kModalities) {
    const auto [lo, hi] = spec.lengths[index_of(m)];
    shape.length[index_of(m)] = lo + static_cast<Index>(r.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  const double u = clip_rng.split("text").uniform();
  shape.text_source = u < spec.text_absent_fraction                           ? TextSource::None
                      : u < spec.text_absent_fraction + spec.caption_fraction ? TextSource::Caption
                                                                              : TextSource::Subtitle;
  return shape;
}

/// Adds the per-clip distractor offsets (non-signal dims) and per-timestep noise.
void add_nuisance(MatrixF& x, const std::vector<Index>& signal, const SynthSpec& spec, CounterRng r) {
  std::vector<bool> is_signal(static_cast<std::size_t>(x.cols()), false);
  for (Index d : signal) is_signal[static_cast<std::size_t>(d)] = true;
  CounterRng off = r.split("distractor");
  for (Index d = 0; d < x.cols(); ++d) {
    const double o = off.normal() * spec.distractor;
    if (!is_signal[static_cast<std::size_t>(d)]) x.col(d).array() += static_cast<float>(o);
  }
  CounterRng noise = r.split("noise");
  for (Index i = 0; i < x.size(); ++i) x.data()[i] += static_cast<float>(noise.normal() * spec.noise);
}

ClipRecord assemble(const SynthSpec& spec, std::size_t i, const ClipShape& shape, std::array<MatrixF, 3> x) {
  ClipRecord clip;
  clip.clip_id = numbered(spec.id_prefix, "", i);
  clip.source_video_id = numbered(spec.id_prefix, "v", i / std::max<std::size_t>(1, spec.clips_per_video));
  clip.text_source = shape.text_source;
  if (shape.text_source != TextSource::None) clip.text = FeatureSequence(Modality::Text, std::move(x[0]));
  clip.audio = FeatureSequence(Modality::Audio, std::move(x[1]));
  clip.video = FeatureSequence(Modality::Video, std::move(x[2]));
  return clip;
}

}  // namespace

SynthSpec SynthSpec::planted(std::uint64_t seed) {
  SynthSpec s;
  s.seed = seed;
  s.signals = {
      {Category::MatureHumor, {{Modality::Text, range(4, 4)}, {Modality::Audio, range(0, 4)}}},
      {Category::GoryHumor, {{Modality::Video, range(0, 4)}}},
      {Category::SlapstickHumor, {{Modality::Audio, range(4, 4)}}},
      {Category::Sarcasm, {{Modality::Text, range(0, 4)}}},
  };
  return s;
}

void SynthSpec::check() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "synth: " + what); };
  for (Modality m : kModalities) {
    if (dims.of(m) < 1) fail("dims must be >= 1");
    const auto [lo, hi] = lengths[index_of(m)];
    if (lo < 1 || hi < lo) fail("length range must satisfy 1 <= min <= max");
  }
  std::set<Category> seen;
  for (const auto& s : signals) {
    if (!seen.insert(s.category).second) fail("category planted twice");
    if (s.channels.empty()) fail("a signal needs at least one channel");
    if (!(s.strength > 0.0)) fail("strength must be > 0");
    if (!(s.prevalence >= 0.0 && s.prevalence <= 1.0)) fail("prevalence must lie in [0, 1]");
    for (const auto& ch : s.channels) {
      if (ch.dims.empty()) fail("a channel needs at least one dim");
      for (Index d : ch.dims)
        if (d < 0 || d >= dims.of(ch.modality)) fail("signal dim outside the modality width");
    }
  }
  if (noise < 0.0 || distractor < 0.0 || jitter < 0.0 || jitter >= 1.0) fail("noise, distractor >= 0 and jitter in [0, 1)");
  if (caption_fraction < 0.0 || text_absent_fraction < 0.0 || caption_fraction + text_absent_fraction > 1.0)
    fail("text fractions must be >= 0 and sum to <= 1");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
}

LabelSet planted_labels(const ClipRecord& clip, const SynthSpec& spec) {
  LabelSet l;
  PerModalityFlags pm{};
  for (const auto& sig : spec.signals) {
    bool all = true;
    for (const auto& ch : sig.channels) {
      const FeatureSequence* seq = ch.modality == Modality::Text ? (clip.text ? &*clip.text : nullptr)
                                   : ch.modality == Modality::Audio ? &clip.audio
                                                                    : &clip.video;
      double mean = 0.0;
      if (seq) {
        for (Index d : ch.dims) mean += seq->data().col(d).cast<double>().sum();
        mean /= static_cast<double>(seq->length() * static_cast<Index>(ch.dims.size()));
      }
      all = all && mean > sig.threshold;
    }
    const int c = static_cast<int>(sig.category);
    if (all)
      for (const auto& ch : sig.channels) pm[c][index_of(ch.modality)] = true;
  }
  for (int c = 0; c < kNumCategories; ++c) l.categories[c] = pm[c][0] || pm[c][1] || pm[c][2];
  l.per_modality = pm;
  l.binary = derive_binary(l);
  return l;
}

Dataset generate(const SynthSpec& spec) {
  spec.check();
  const CounterRng root = CounterRng(spec.seed).split("clip");
  Dataset out;
  out.reserve(spec.n_clips);
  for (std::size_t i = 0; i < spec.n_clips; ++i) {
    const CounterRng r = root.split(static_cast<std::uint64_t>(i));
    const ClipShape shape = draw_shape(spec, r);
    std::array<MatrixF, 3> x;
    for (Modality m : kModalities)
      x[index_of(m)] = MatrixF::Zero(shape.length[index_of(m)], spec.dims.of(m));

    CounterRng act = r.split("activation");
    for (const auto& sig : spec.signals) {
      // Joint categories: each channel is on with prevalence^(1/K), so the AND hits the target rate.
      const double q = std::pow(sig.prevalence, 1.0 / static_cast<double>(sig.channels.size()));
      for (const auto& ch : sig.channels) {
        const bool on = act.bernoulli(q);
        const double magnitude = sig.strength * (1.0 + spec.jitter * (2.0 * act.uniform() - 1.0));
        const auto a = static_cast<float>(sig.threshold + (on ? magnitude : -magnitude));
        for (Index d : ch.dims) x[index_of(ch.modality)].col(d).array() += a;
      }
    }
    for (Modality m : kModalities)
      add_nuisance(x[index_of(m)], signal_dims(spec, m), spec, r.split(to_string(m)));

    ClipRecord clip = assemble(spec, i, shape, std::move(x));
    clip.labels = planted_labels(clip, spec);
    out.push_back(std::move(clip));
  }
  return out;
}

SynthSplits generate_splits(const SynthSpec& spec, std::size_t n_train, std::size_t n_val, std::size_t n_test) {
  auto part = [&](const char* name, std::size_t n) {
    SynthSpec s = spec;
    s.n_clips = n;
    s.seed = CounterRng(spec.seed).split(name).next_u64();
    s.id_prefix = spec.id_prefix + "-" + name;
    return generate(s);
  };
  return {part("train", n_train), part("val", n_val), part("test", n_test)};
}

MatrixD aligned_embedding(const SynthSpec& spec, Modality m) {
  const auto dims = signal_dims(spec, m);
  MatrixD e = MatrixD::Zero(spec.dims.of(m), spec.latent_dim);
  CounterRng r = CounterRng(spec.seed).split("embed").split(to_string(m));
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (Index d : dims)
    for (Index k = 0; k < spec.latent_dim; ++k) e(d, k) = r.normal() * scale;
  return e;
}

namespace {

Dataset aligned_clips(const SynthSpec& spec, const std::array<MatrixD, 3>& embed) {
  const CounterRng root = CounterRng(spec.seed).split("aligned");
  Dataset out;
  out.reserve(spec.n_clips);
  for (std::size_t i = 0; i < spec.n_clips; ++i) {
    const CounterRng r = root.split(static_cast<std::uint64_t>(i));
    ClipShape shape = draw_shape(spec, r);
    shape.text_source = TextSource::Subtitle;
    Eigen::VectorXd z(spec.latent_dim);
    CounterRng zr = r.split("latent");
    for (Index k = 0; k < spec.latent_dim; ++k) z(k) = zr.normal();

    std::array<MatrixF, 3> x;
    for (Modality m : kModalities) {
      const Eigen::RowVectorXf row = (embed[index_of(m)] * z).transpose().cast<float>();
      x[index_of(m)] = row.replicate(shape.length[index_of(m)], 1);
      add_nuisance(x[index_of(m)], signal_dims(spec, m), spec, r.split(to_string(m)));
    }
    out.push_back(assemble(spec, i, shape, std::move(x)));
  }
  return out;
}

std::array<MatrixD, 3> embeddings(const SynthSpec& spec) {
  std::array<MatrixD, 3> embed;
  for (Modality m : kModalities) embed[index_of(m)] = aligned_embedding(spec, m);
  return embed;
}

}  // namespace

Dataset generate_aligned_corpus(const SynthSpec& spec) {
  spec.check();
  return aligned_clips(spec, embeddings(spec));
}

SynthSplits generate_aligned_splits(const SynthSpec& spec, std::size_t n_train, std::size_t n_val,
                                    std::size_t n_test) {
  spec.check();
  const auto embed = embeddings(spec);
  auto part = [&](const char* name, std::size_t n) {
    SynthSpec s = spec;
    s.n_clips = n;
    s.seed = CounterRng(spec.seed).split(name).next_u64();
    s.id_prefix = spec.id_prefix + "-" + name;
    return aligned_clips(s, embed);
  };
  return {part("train", n_train), part("val", n_val), part("test", n_test)};
}

}  // namespace hiccap
