#ifndef AMENABLE_RNG_HPP_
#define AMENABLE_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace amenable {

// Seeded random stream. Every run owns one root stream; independent child
// streams are derived by (label, index) so that partial re-runs (e.g. resume
// at a trial boundary) reproduce the same per-trial randomness.
//
// All draws go through hand-rolled conversions (never std::*_distribution)
// so sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // uniform in [0, 1)
  double uniform01();
  // uniform in [lo, hi)
  double uniform(double lo, double hi);
  // uniform integer in [0, n), n >= 1
  std::uint64_t uniform_int(std::uint64_t n);
  // standard normal via Box-Muller (second value discarded)
  double normal();
  double normal(double mean, double stddev);
  // true with probability p; p<=0 never, p>=1 always
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

  // Child-seed derivation: splitmix64(seed ^ fnv1a(label) ^ mix(index)).
  static std::uint64_t derive(std::uint64_t seed, std::string_view label,
                              std::uint64_t index = 0);
  Rng child(std::string_view label, std::uint64_t index = 0) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace amenable

#endif  // AMENABLE_RNG_HPP_
