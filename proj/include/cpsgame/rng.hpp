#pragma once

#include <cstdint>
#include <random>

namespace cpsgame {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream tags. A random stream is identified by (master seed, tag, index) so
// that results never depend on how work is scheduled across threads.
enum class Stream : std::uint64_t {
  kTraining = 1,
  kEvaluation = 2,
  kSimulation = 3,
  kTest = 99,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index,
                                    std::uint64_t sub = 0) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ sub);
  return splitmix64(h + index);
}

inline Rng make_stream(std::uint64_t master, Stream stream, std::uint64_t index,
                       std::uint64_t sub = 0) {
  return Rng(derive_seed(master, stream, index, sub));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace cpsgame
