#pragma once

#include <cstdint>
#include <string_view>

namespace mechreg {

/// Counter-based generator: the n-th draw of a (seed, stream, substream)
/// triple is a pure hash of those values and n, so streams never interfere
/// and adding draws to one stream leaves every other stream unchanged.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t hash(std::string_view s);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mechreg
