#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trace {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose ("split", "batches", "init",
/// "missing", ...) derived from one run seed, so consumers never share
/// a stream and an ablation only perturbs the stream it touches.
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace trace
