#ifndef HPROBE_RANDOM_HPP_
#define HPROBE_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace hprobe {

using Rng = std::mt19937_64;

// Seed of the named sub-stream `stream` under the root `seed`. Distinct
// names give statistically independent streams.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(substream_seed(seed, stream));
}

// FNV-1a over bytes; used for config fingerprints.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace hprobe

#endif  // HPROBE_RANDOM_HPP_
