#pragma once

#include <cstdint>
#include <string_view>

namespace hiccap {

/// Counter-based, splittable generator ("hiccap-ctr64", version 1).
///
/// Draw k of a stream with key K is mix(K + (k+1) * golden), where mix is the
/// SplitMix64 finalizer. Sub-streams are derived from the parent key and a
/// name (or index), never from the parent's counter, so the outputs of a
/// child do not depend on how many draws the parent has made.
class CounterRng {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc908ULL)) {}

  CounterRng split(std::string_view name) const;
  CounterRng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  struct FromKey {};
  CounterRng(FromKey, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hiccap
