#ifndef AFFORGE_SEED_HPP
#define AFFORGE_SEED_HPP

#include <cstdint>
#include <string_view>

namespace afforge {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Platform-independent child seed: FNV-1a over the label, folded with the parent.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(parent ^ splitmix64(h));
}

}  // namespace afforge

#endif  // AFFORGE_SEED_HPP
