#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace refchain {

// FNV-1a over the raw bytes of a string. Used to derive stable per-record
// seeds from utterance ids.
std::uint64_t fnv1a64(std::string_view bytes);

// SplitMix64 finalizer. Bijective on uint64, decorrelates nearby inputs.
std::uint64_t splitmix64(std::uint64_t x);

// Seed for one corpus record: mixes the global seed with the utterance id so
// records are independent of corpus order and of each other.
std::uint64_t derive_record_seed(std::uint64_t global_seed, std::string_view utterance_id);

// Thin wrapper around mt19937_64 with an explicit bit-to-double mapping and a
// draw counter. The counter lets tests assert that deterministic paths never
// touch the stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection-free modulo is fine here: n is tiny
  // (object counts), so the bias is far below anything observable.
  std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (one value per call, cache discarded to
  // keep the draw count predictable).
  double next_normal();

  std::uint64_t draw_count() const { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace refchain
