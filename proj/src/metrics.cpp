#include "hiccap/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

namespace hiccap {

namespace {
void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw Error(ErrorKind::LengthMismatch, "empty input");
}
}  // namespace

Confusion confusion(std::span<const int> preds, std::span<const int> golds, int positive_class) {
  check_lengths(preds.size(), golds.size());
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    bool p = preds[i] == positive_class;
    bool g = golds[i] == positive_class;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1(std::span<const int> preds, std::span<const int> golds, int positive_class) {
  Confusion c = confusion(preds, golds, positive_class);
  if (c.tp + c.fp + c.fn == 0)
    throw Error(ErrorKind::NoPositivesAnywhere, "no gold or predicted positives");
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double macro_f1(std::span<const CategoryPredictions> categories) {
  if (categories.empty()) throw Error(ErrorKind::LengthMismatch, "no categories");
  double sum = 0.0;
  for (const auto& c : categories) sum += f1(c.preds, c.golds, 1);
  return sum / static_cast<double>(categories.size());
}

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  check_lengths(preds.size(), golds.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double average_precision(std::span<const double> scores, std::span<const int> golds) {
  check_lengths(scores.size(), golds.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (golds[order[rank]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw Error(ErrorKind::NoPositives, "average precision needs a gold positive");
  return sum / static_cast<double>(hits);
}

AgreementStats cohens_kappa(std::span<const int> a, std::span<const int> b) {
  check_lengths(a.size(), b.size());
  const double n = static_cast<double>(a.size());
  std::map<int, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i];
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
  }
  AgreementStats s;
  s.p_o = agree / n;
  for (const auto& [label, m] : marginals) s.p_e += (m.first / n) * (m.second / n);
  if (s.p_e >= 1.0) {
    if (s.p_o < 1.0) throw Error(ErrorKind::DegenerateMarginals, "p_e == 1 with disagreement");
    s.kappa = 1.0;
    return s;
  }
  s.kappa = (s.p_o - s.p_e) / (1.0 - s.p_e);
  return s;
}

}  // namespace hiccap
