#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace explainbench {

// SplitMix64 output function applied to `x + golden`. Used both as the
// counter-based generator core and as the seed-derivation hash.
std::uint64_t splitmix64(std::uint64_t x);

// Counter-based generator: the i-th draw is splitmix64(key, i), so a stream
// is fully determined by its key and there is no hidden global state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by Box-Muller; both variates of a pair are used.
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Independent sub-stream, e.g. one per feature or per perturbation.
  CounterRng fork(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// Absorbs a byte string into a 64-bit state (length-prefixed, 8-byte words).
std::uint64_t absorb(std::uint64_t state, std::string_view bytes);
std::uint64_t absorb(std::uint64_t state, std::uint64_t word);

// Seed for one (dataset, row, method) work item.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view dataset_id,
                          std::uint64_t row_index, std::string_view method);

// 64-bit content hash rendered as 16 lowercase hex digits.
std::string content_digest(std::string_view bytes);

}  // namespace explainbench
