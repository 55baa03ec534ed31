#include "binfer/rng.hpp"

#include <cmath>

namespace binfer {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer: bijective avalanche mix.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  // Decorrelate the start states of nearby (seed, stream) pairs before the
  // counter walk begins.
  state_ = mix64(seed + kGamma) ^ mix64(stream_id * 0xC2B2AE3D27D4EB4Full + 0x165667B19E3779F9ull);
}

std::uint64_t RngStream::raw() {
  state_ += kGamma;
  return mix64(state_);
}

double RngStream::uniform() {
  return static_cast<double>(raw() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  // u1 in (0, 1] so the log is finite.
  double u1 = static_cast<double>((raw() >> 11) + 1) * 0x1.0p-53;
  double u2 = static_cast<double>(raw() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

std::size_t RngStream::uniform_index(std::size_t n) {
  // Rejection-free multiply-shift; bias is negligible for n << 2^64.
  return static_cast<std::size_t>(raw() % n);
}

Tensor RngStream::normal_tensor(std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  fill_normal(t.data(), t.size());
  return t;
}

void RngStream::fill_normal(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = normal();
}

void RngStream::shuffle(std::vector<std::size_t>& v) {
  if (v.size() < 2) return;
  for (std::size_t i = v.size() - 1; i > 0; --i) {
    std::size_t j = uniform_index(i + 1);
    std::swap(v[i], v[j]);
  }
}

}  // namespace binfer
