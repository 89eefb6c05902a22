#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace ddunet {

// Independent random streams; each purpose draws from its own sequence.
enum class Stream : std::uint64_t {
  kInit = 1,
  kDropout = 2,
  kAugment = 3,
  kSplit = 4,
  kPhantom = 5,
};

/// Counter-based random generator.
///
/// The value of draw i depends only on (seed, stream, key, i), never on what
/// other streams have consumed, so results do not depend on evaluation order.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t key = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal();
  // Uniform integer on [0, n).
  std::size_t below(std::size_t n);

  std::uint64_t draws() const { return counter_; }

  // Stateless keyed hash; used where a value must be addressable directly.
  static std::uint64_t hash(std::initializer_list<std::uint64_t> words);
  static double hash_uniform(std::initializer_list<std::uint64_t> words);

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

// 64-bit FNV-1a; stable across platforms and standard libraries.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xCBF29CE484222325ULL);

}  // namespace ddunet
