#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace euler_resnet {

/// splitmix64 finalizer. Used to expand a 64-bit seed into generator state
/// and to derive independent child seeds.
///
///   z  = x + 0x9E3779B97F4A7C15
///   z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
std::uint64_t splitmix64(std::uint64_t x);

/// Seed-splitting rule shared by every module: the child seed for stream `k`
/// of base seed `s` is splitmix64(s ^ splitmix64(k + 1)).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// xoshiro256** generator with Box-Muller normals.
///
/// State s[0..3] is filled by four successive splitmix64 outputs of the
/// seed (x_{k+1} = x_k + 0x9E3779B97F4A7C15). One step:
///
///   result = rotl(s1 * 5, 7) * 9
///   t = s1 << 17
///   s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
///
/// uniform() = (next() >> 11) * 2^-53, in [0, 1).
/// normal() draws u1 = 1 - uniform(), u2 = uniform() and returns
/// sqrt(-2 ln u1) cos(2 pi u2); the paired sine value is kept for the next
/// call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace euler_resnet
