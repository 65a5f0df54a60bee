#include "mechreg/rng.hpp"

namespace mechreg {

std::uint64_t CounterRng::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::string_view stream, std::uint64_t substream)
    : key_(mix(mix(seed) ^ hash(stream)) ^ mix(substream + 0x632BE59BD9B4E019ull)) {}

std::uint64_t CounterRng::next_u64() { return mix(key_ ^ mix(counter_++)); }

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

}  // namespace mechreg
