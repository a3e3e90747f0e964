#pragma once

// Helpers shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "hiccap/model.hpp"
#include "hiccap/rng.hpp"

namespace hiccap::testing {

inline MatrixD random_matrix(Index rows, Index cols, CounterRng& rng, double scale = 1.0) {
  MatrixD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

inline MatrixF random_matrix_f(Index rows, Index cols, CounterRng& rng, double scale = 1.0) {
  return random_matrix(rows, cols, rng, scale).cast<float>();
}

inline ModelConfig tiny_model_config(Index d = 8, FeatureDims dims = {6, 5, 7}) {
  ModelConfig cfg;
  cfg.dims = dims;
  cfg.encoder.d_model = d;
  return cfg;
}

/// A clip with random features; T drawn in [1, max_len].
inline ClipRecord random_clip(const FeatureDims& dims, CounterRng& rng, const std::string& id, Index max_len = 5) {
  ClipRecord c;
  c.clip_id = id;
  c.source_video_id = "v-" + id;
  auto len = [&] { return 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_len))); };
  c.text = FeatureSequence(Modality::Text, random_matrix_f(len(), dims.text, rng));
  c.text_source = TextSource::Subtitle;
  c.audio = FeatureSequence(Modality::Audio, random_matrix_f(len(), dims.audio, rng));
  c.video = FeatureSequence(Modality::Video, random_matrix_f(len(), dims.video, rng));
  std::array<bool, kNumCategories> cats{};
  for (auto& b : cats) b = rng.bernoulli(0.5);
  c.labels = LabelSet::from_categories(cats);
  return c;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences over every trainable scalar, against the analytic gradient of `loss`.
/// Relative error is |a - n| / max(|a|, |n|, floor).
template <class S>
GradCheck check_gradients(ParamStore<S>& store, const std::function<ad::Var<S>(ad::Tape<S>&)>& loss,
                          double step = 1e-5, double floor = 1e-4) {
  store.zero_grad();
  {
    ad::Tape<S> t;
    auto l = loss(t);
    t.backward(l);
  }
  GradCheck out;
  for (auto& p : store.params()) {
    if (!p.trainable) continue;
    const Matrix<S> analytic = p.grad;
    for (Index i = 0; i < p.value.size(); ++i) {
      const S saved = p.value.data()[i];
      p.value.data()[i] = saved + step;
      double up;
      {
        ad::Tape<S> t(false);
        up = loss(t).scalar();
      }
      p.value.data()[i] = saved - step;
      double down;
      {
        ad::Tape<S> t(false);
        down = loss(t).scalar();
      }
      p.value.data()[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        char buf[96];
        std::snprintf(buf, sizeof buf, "[%ld] analytic %.6e numeric %.6e", static_cast<long>(i), a, numeric);
        out.worst = p.name + buf;
      }
    }
  }
  return out;
}

}  // namespace hiccap::testing
