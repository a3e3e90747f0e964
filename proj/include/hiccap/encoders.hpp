#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiccap/data_model.hpp"
#include "hiccap/layers.hpp"

namespace hiccap {

struct EncoderConfig {
  Index d_model = 256;
  Index recurrent_hidden = 0;  // 0 means d_model
  Index recurrent_layers = 1;
  bool bidirectional = false;
  std::uint64_t seed = 0;

  Index hidden() const { return recurrent_hidden > 0 ? recurrent_hidden : d_model; }
  void check() const {
    if (d_model < 1 || hidden() < 1 || recurrent_layers < 1)
      throw Error(ErrorKind::InvalidConfig, "encoder widths and layer count must be >= 1");
  }
};

template <class S>
struct EncodedSequence {
  Modality modality;
  Matrix<S> data;  // T x d_model

  Index length() const { return data.rows(); }
};

/// Per-timestep affine map from contextual token features to d_model.
template <class S>
struct TextEncoder {
  Linear<S> projection;

  TextEncoder() = default;
  TextEncoder(ParamStore<S>& store, const std::string& name, Index in, const EncoderConfig& cfg,
              const CounterRng& rng)
      : projection(store, name + ".proj", in, cfg.d_model, rng) {}

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x) const { return projection(t, x); }
};

/// Stacked (optionally bidirectional) LSTM over the full sequence, then a per-timestep FC layer.
template <class S>
struct RecurrentEncoder {
  std::vector<LstmLayer<S>> forward_layers;
  std::vector<LstmLayer<S>> backward_layers;
  Linear<S> fc;

  RecurrentEncoder() = default;
  RecurrentEncoder(ParamStore<S>& store, const std::string& name, Index in, const EncoderConfig& cfg,
                   const CounterRng& rng) {
    const Index h = cfg.hidden();
    const Index step_out = cfg.bidirectional ? 2 * h : h;
    for (Index l = 0; l < cfg.recurrent_layers; ++l) {
      const Index layer_in = l == 0 ? in : step_out;
      const std::string ln = name + ".lstm" + std::to_string(l);
      forward_layers.emplace_back(store, ln, layer_in, h, rng);
      if (cfg.bidirectional) backward_layers.emplace_back(store, ln + "_rev", layer_in, h, rng);
    }
    fc = Linear<S>(store, name + ".fc", step_out, cfg.d_model, rng);
  }

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x) const {
    for (std::size_t l = 0; l < forward_layers.size(); ++l) {
      ad::Var<S> fwd = forward_layers[l](t, x);
      if (backward_layers.empty()) {
        x = fwd;
      } else {
        ad::Var<S> bwd = ad::reverse_rows(backward_layers[l](t, ad::reverse_rows(x)));
        x = ad::hcat<S>({fwd, bwd});
      }
    }
    return fc(t, x);
  }
};

namespace detail {
inline void check_input(const FeatureSequence& seq, Modality expected) {
  if (seq.modality() != expected)
    throw Error(ErrorKind::WrongModality,
                std::string("expected ") + to_string(expected) + ", got " + to_string(seq.modality()));
  if (seq.length() < 1) throw Error(ErrorKind::EmptySequence, to_string(expected));
}

template <class S, class Encoder>
EncodedSequence<S> run_encoder(const FeatureSequence& seq, const Encoder& enc, Modality expected) {
  check_input(seq, expected);
  ad::Tape<S> t(false);
  auto out = enc(t, t.constant(seq.data().template cast<S>()));
  return {expected, out.value()};
}
}  // namespace detail

template <class S>
EncodedSequence<S> encode_text(const FeatureSequence& seq, const TextEncoder<S>& enc) {
  return detail::run_encoder<S>(seq, enc, Modality::Text);
}

template <class S>
EncodedSequence<S> encode_audio(const FeatureSequence& seq, const RecurrentEncoder<S>& enc) {
  return detail::run_encoder<S>(seq, enc, Modality::Audio);
}

template <class S>
EncodedSequence<S> encode_video(const FeatureSequence& seq, const RecurrentEncoder<S>& enc) {
  return detail::run_encoder<S>(seq, enc, Modality::Video);
}

}  // namespace hiccap
