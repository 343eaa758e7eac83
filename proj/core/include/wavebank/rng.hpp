#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace wavebank {

// xoshiro256** seeded through splitmix64. The standard library engines are
// portable but its distributions are not, so every random draw in the
// project goes through this class to keep runs bit-reproducible across
// platforms and compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi] inclusive. Uses modulo reduction; the bias
  // is far below anything observable at the span sizes used here.
  int64_t uniform_int(int64_t lo, int64_t hi);

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

  // Deterministically derives an independent stream from a base seed and a
  // path of indices (e.g. {epoch, utterance}). Stateless: the same inputs
  // always give the same stream.
  static Rng derive(uint64_t base_seed, std::initializer_list<uint64_t> path);

 private:
  std::array<uint64_t, 4> s_{};
};

// splitmix64 mixing step, exposed for seed derivation and hashing helpers.
uint64_t splitmix64(uint64_t& state);

}  // namespace wavebank
