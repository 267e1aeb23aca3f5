#pragma once

// Seed derivation for the per-device, per-purpose random streams.
//
// Every stream seed is a splitmix64 mix of (master seed, device id, purpose),
// so adding a device never changes the stream of an existing one.

#include <cstdint>
#include <random>

namespace fedsophia {

using Rng = std::mt19937_64;

enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kPartition = 2,
  kBatch = 3,
  kGnb = 4,
  kData = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t device,
                                    StreamPurpose purpose) noexcept {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ (device + 0x632be59bd9b4e019ULL));
  return splitmix64(s ^ static_cast<std::uint64_t>(purpose));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t device, StreamPurpose purpose) {
  return Rng(derive_seed(master, device, purpose));
}

}  // namespace fedsophia
