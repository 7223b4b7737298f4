#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace selrag {

// SplitMix64. Used wherever a draw must be reproducible byte-for-byte across
// standard library implementations (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [lo, hi] (Lemire's multiply-shift with rejection).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;

  bool coin() noexcept { return (next() >> 63) != 0; }

  // Uniform double in [0, 1).
  double uniform_real() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Seed for item `index` of a stream seeded by `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown by
// any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace selrag
