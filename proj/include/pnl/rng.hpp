#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pnl {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named stream ("datagen", "augment",
/// "init", ...) from the root seed. Stable across platforms.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index);

inline Rng make_stream(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

/// Platform-independent draws built directly on engine output (the standard
/// distributions are implementation-defined).
double uniform01(Rng& rng);
/// Uniform integer in [lo, hi], unbiased.
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

/// Beta(a, b) through two gamma draws.
double sample_beta(Rng& rng, double a, double b);

/// Textual engine state, for checkpoints.
std::string save_state(const Rng& rng);
void load_state(Rng& rng, const std::string& state);

}  // namespace pnl
