#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace nac2l {

using Rng = std::mt19937_64;

/// Derives a child seed from a root seed and a named stream plus up to two
/// integer coordinates (e.g. outer iteration k and inner round j). Streams
/// with different names never share draws, so adding a consumer of one
/// stream leaves the others untouched.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t i = 0, std::uint64_t j = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream,
                    std::uint64_t i = 0, std::uint64_t j = 0) {
  return Rng(derive_seed(root, stream, i, j));
}

/// Uniform draw in [0, 1) built from the raw 64-bit output, so the sequence
/// does not depend on the standard library's distribution implementation.
double uniform01(Rng& rng);

/// Standard normal draw (Box-Muller on uniform01).
double standard_normal(Rng& rng);

/// Index drawn from a discrete distribution given by nonnegative weights
/// summing to one (inverse CDF). The last index with positive weight absorbs
/// rounding slack.
int sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng);

}  // namespace nac2l
