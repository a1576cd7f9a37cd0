#include "explainbench/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace explainbench {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return splitmix64(key_ ^ splitmix64(counter_));
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r = next_u64();
  while (r >= limit) r = next_u64();
  return r % n;
}

CounterRng CounterRng::fork(std::uint64_t stream) const {
  return CounterRng(splitmix64(key_ ^ splitmix64(stream ^ 0xA5A5A5A5A5A5A5A5ULL)));
}

std::uint64_t absorb(std::uint64_t state, std::uint64_t word) {
  return splitmix64(state ^ word);
}

std::uint64_t absorb(std::uint64_t state, std::string_view bytes) {
  state = absorb(state, static_cast<std::uint64_t>(bytes.size()));
  std::uint64_t word = 0;
  int filled = 0;
  for (unsigned char c : bytes) {
    word |= static_cast<std::uint64_t>(c) << (8 * filled);
    if (++filled == 8) {
      state = absorb(state, word);
      word = 0;
      filled = 0;
    }
  }
  if (filled > 0) state = absorb(state, word);
  return state;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view dataset_id,
                          std::uint64_t row_index, std::string_view method) {
  std::uint64_t state = splitmix64(base_seed);
  state = absorb(state, dataset_id);
  state = absorb(state, row_index);
  state = absorb(state, method);
  return state;
}

std::string content_digest(std::string_view bytes) {
  const std::uint64_t h = absorb(splitmix64(0x6578706c61696eULL), bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

}  // namespace explainbench
