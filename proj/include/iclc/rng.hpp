#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace iclc {

// FNV-1a over bytes followed by a splitmix64 finalizer. Stable across
// platforms and standard libraries, unlike std::hash.
class StableHash {
 public:
  StableHash& add(std::string_view bytes);
  StableHash& add(std::uint64_t value);
  std::uint64_t digest() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t mix64(std::uint64_t x);

// mt19937_64 is fully specified by the standard; the distributions are not,
// so bounded draws are done here by rejection to keep sequences portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform double in [0, 1) with 53 random bits.
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace iclc
