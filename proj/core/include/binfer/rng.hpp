#pragma once

#include <cstdint>
#include <vector>

#include "binfer/tensor.hpp"

namespace binfer {

/// Counter-based random stream. A stream is fully determined by
/// (seed, stream_id): the raw 64-bit sequence is identical across runs and
/// platforms, and distinct stream_ids give statistically independent
/// sequences, so parallel chains can each own a stream without coordination.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Next raw 64-bit word.
  std::uint64_t raw();

  /// Uniform on [0, 1).
  double uniform();

  /// Standard normal via Box-Muller; consumes exactly two raw words.
  double normal();

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);

  Tensor normal_tensor(std::vector<std::size_t> shape);
  void fill_normal(double* out, std::size_t n);

  /// Fisher-Yates shuffle.
  void shuffle(std::vector<std::size_t>& v);

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t state_ = 0;
};

}  // namespace binfer
