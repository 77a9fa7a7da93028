#pragma once

#include <cstdint>
#include <random>

namespace cdkf {

/// Seeded random stream. Identical (seed, stream id) pairs reproduce the
/// exact same draws; distinct stream ids give independent streams. All
/// distributions are generated from raw engine output so the draw sequence
/// does not depend on the standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Uniform double in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Exponential with the given rate (> 0).
  double exponential(double rate);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cdkf
