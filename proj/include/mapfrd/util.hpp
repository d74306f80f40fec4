#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mapfrd {

using Rng = std::mt19937_64;

// Portable draws: the std distributions are implementation-defined, these are not.
inline double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_index(Rng& rng, int n) {
  return static_cast<int>(unit_uniform(rng) * n);
}

template <class T>
void shuffle_portable(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
  }
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Seed derived from a base seed and a tag; used to decorrelate streams.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::vector<std::string> split_ws(std::string_view line);
std::string_view trim(std::string_view s);

// "%.{decimals}f" without locale surprises.
std::string fixed(double v, int decimals);

}  // namespace mapfrd
