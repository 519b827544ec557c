#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace spinescan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Library version, "<project version>+<git describe>" when built from a
// checkout.
std::string_view version();

enum class Region { Sacrum, Lumbar, Thoracic };

std::string_view to_string(Region r);
Region region_from_string(std::string_view s);

enum class Side { Left, Right };

std::string_view to_string(Side s);
Side side_from_string(std::string_view s);

enum class ErrorCode {
  InvalidArgument,
  InfeasibleConfig,
  OutOfRange,
  Degenerate,
  NoTest,
  ExtractionFailed,
  Io,
};

std::string_view to_string(ErrorCode c);

// Single exception type for the library; the code is what callers branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Counter-based hashing for per-pixel / per-draw noise streams. splitmix64
// finalizer; good enough avalanche for simulation noise and fully
// order-independent, so parallel loops stay bit-reproducible.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) noexcept {
  return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

template <typename... Ts>
constexpr std::uint64_t stream_seed(std::uint64_t seed, Ts... parts) noexcept {
  std::uint64_t h = mix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(parts))), ...);
  return h;
}

// Uniform in [0,1) from the top 53 bits.
constexpr double unit_uniform(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace spinescan
