#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace geocdl {

/// 64-bit FNV-1a; stable across platforms and runs.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return splitmix64(parent ^ fnv1a64(tag));
}
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + index);
}

std::string to_hex(std::uint64_t v);

/// Content hash rendered as 32 hex characters (two independent FNV streams).
std::string content_hash(std::string_view data);

/// Seeded stream with portable draws. The std distributions are
/// implementation-defined, so uniform draws are derived from raw engine bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

std::string trim(std::string_view s);

struct KeyValue {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

/// `key = value` lines. Blank lines and lines whose first non-blank
/// character is `#` are skipped.
/// Throws std::invalid_argument naming the line of a malformed entry.
std::vector<KeyValue> parse_key_values(std::string_view text);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace geocdl
