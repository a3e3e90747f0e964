#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "hiccap/error.hpp"

namespace hiccap {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

Confusion confusion(std::span<const int> preds, std::span<const int> golds, int positive_class = 1);

/// F1 with respect to `positive_class`. Throws LengthMismatch (including empty input) and
/// NoPositivesAnywhere when neither golds nor predictions contain the positive class.
double f1(std::span<const int> preds, std::span<const int> golds, int positive_class = 1);

struct CategoryPredictions {
  std::vector<int> preds;
  std::vector<int> golds;
};

/// Unweighted mean of per-category F1 (positive class = presence).
double macro_f1(std::span<const CategoryPredictions> categories);

double accuracy(std::span<const int> preds, std::span<const int> golds);

/// Non-interpolated rank-walk AP; descending score, ties broken by original index.
double average_precision(std::span<const double> scores, std::span<const int> golds);

struct AgreementStats {
  double p_o = 0.0;
  double p_e = 0.0;
  double kappa = 0.0;
};

/// Cohen's kappa for two raters over categorical labels. Both raters constant and identical
/// gives kappa 1; p_e == 1 with disagreement throws DegenerateMarginals.
AgreementStats cohens_kappa(std::span<const int> a, std::span<const int> b);

}  // namespace hiccap
