#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sviplus {

using Rng = std::mt19937_64;

/// Seed for the named stream at iteration (or replicate) t. Streams with
/// different names are independent; a given (master, name, t) always yields
/// the same sequence, whatever order the streams are requested in.
std::uint64_t stream_seed(std::uint64_t master, std::string_view name, std::uint64_t t);

inline Rng make_stream(std::uint64_t master, std::string_view name, std::uint64_t t) {
  return Rng(stream_seed(master, name, t));
}

}  // namespace sviplus
