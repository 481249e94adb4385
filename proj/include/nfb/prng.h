#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nfb {

// SplitMix64 step; used for seeding and for deriving independent sub-seeds.
std::uint64_t SplitMix64(std::uint64_t& state);

// Mixes a seed with a stream tag so that, e.g., init and shuffling draw
// from unrelated sequences.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

// 64-bit FNV-1a of a string, used to key per-record streams by id.
std::uint64_t Fnv1a64(std::string_view text);

// xoshiro256** seeded by four SplitMix64 outputs. Every draw helper below is
// fully specified so generated data is reproducible across implementations.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return Next(); }

  std::uint64_t Next();
  // Top 53 bits scaled to [0, 1).
  double Uniform();
  // Box-Muller, cosine branch only: two uniforms per normal.
  //   sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
  double Normal();
  // Modulo reduction with rejection; uniform in [0, bound).
  std::uint64_t Below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Fisher-Yates from the back: for i = n-1 .. 1, swap(i, Below(i + 1)).
void Shuffle(std::vector<std::size_t>& items, Xoshiro256& rng);

// 0..n-1 shuffled as above.
std::vector<std::size_t> Permutation(std::size_t n, Xoshiro256& rng);

}  // namespace nfb
