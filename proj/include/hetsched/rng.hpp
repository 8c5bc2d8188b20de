#pragma once

#include <cstdint>
#include <random>

namespace hetsched {

using Rng = std::mt19937_64;

/// Named, independent random streams derived from one experiment seed. A given
/// (seed, stream) pair always produces the same sequence, so e.g. the arrival
/// process is identical across schedulers at equal seeds.
enum class Stream : std::uint64_t { injection = 1, noise = 2, scheduler = 3, init = 4, training = 5 };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(salt * 0x632be59bd9b4e019ULL + 1));
}

inline Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(stream)), index));
}

}  // namespace hetsched
