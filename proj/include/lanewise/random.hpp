#pragma once

#include <cstdint>
#include <random>

namespace lanewise {

using Rng = std::mt19937_64;

// Independent generator for stream `stream` under master seed `seed`.
// The same (seed, stream) pair always yields the same sequence.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6c616e65u};
  return Rng(seq);
}

}  // namespace lanewise
