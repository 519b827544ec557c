#include "spinescan/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace spinescan::detector {

void validate(const DetectorNoise& noise) {
  if (noise.sigma_mm < 0.0) throw Error(ErrorCode::InvalidArgument, "sigma_mm must be non-negative");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(noise.miss_rate) || !in_unit(noise.misclass_rate))
    throw Error(ErrorCode::InvalidArgument, "detector noise rates must lie in [0,1]");
}

std::optional<Detection> detect(const bmode::BModeFrame& frame, const bmode::ImagingConfig& imaging,
                                const DetectorConfig& cfg) {
  const int W = frame.width;
  const int H = frame.height;
  if (W != imaging.width_px || H != imaging.height_px)
    throw Error(ErrorCode::InvalidArgument, "frame dimensions do not match imaging config");
  const int top = std::clamp(static_cast<int>(std::ceil(cfg.skip_top_mm / imaging.axial_spacing())), 0, H - 1);

  std::vector<double> col(W, 0.0);
  for (int r = top; r < H; ++r) {
    const std::uint8_t* row = frame.pixels.data() + static_cast<std::size_t>(r) * W;
    for (int c = 0; c < W; ++c) col[c] += row[c];
  }
  for (auto& v : col) v /= (H - top);

  std::vector<double> sorted = col;
  std::nth_element(sorted.begin(), sorted.begin() + W / 2, sorted.end());
  const double median = sorted[W / 2];
  std::vector<char> alive(W);
  for (int c = 0; c < W; ++c) alive[c] = col[c] > cfg.dead_column_ratio * median;

  const int half = std::max(0, static_cast<int>(std::lround(0.5 * cfg.kernel_mm / imaging.lateral_spacing())));
  std::vector<double> prefix(W + 1, 0.0), count(W + 1, 0.0);
  for (int c = 0; c < W; ++c) {
    prefix[c + 1] = prefix[c] + (alive[c] ? col[c] : 0.0);
    count[c + 1] = count[c] + (alive[c] ? 1.0 : 0.0);
  }
  double ref = 0.0;
  int n_alive = 0;
  int best = -1;
  double best_v = 0.0;
  std::vector<double> smooth(W, 0.0);
  for (int c = 0; c < W; ++c) {
    if (!alive[c]) continue;
    const int lo = std::max(0, c - half), hi = std::min(W, c + half + 1);
    const double n = count[hi] - count[lo];
    smooth[c] = (prefix[hi] - prefix[lo]) / n;
    ref += smooth[c];
    ++n_alive;
    if (best < 0 || smooth[c] < best_v) {
      best = c;
      best_v = smooth[c];
    }
  }
  if (n_alive == 0) return std::nullopt;
  ref /= n_alive;
  if (!(ref > 0.0)) return std::nullopt;
  const double confidence = std::clamp((ref - best_v) / ref, 0.0, 1.0);
  if (confidence < cfg.confidence_threshold) return std::nullopt;

  // A shadow wider than the kernel leaves a flat floor; report its centre.
  const double floor_tol = 0.02 * (ref - best_v);
  int lo = best, hi = best;
  while (lo > 0 && alive[lo - 1] && smooth[lo - 1] <= best_v + floor_tol) --lo;
  while (hi + 1 < W && alive[hi + 1] && smooth[hi + 1] <= best_v + floor_tol) ++hi;

  Detection d;
  d.lateral_px = 0.5 * (lo + hi);
  d.lateral_mm = (d.lateral_px - imaging.center_px()) * imaging.lateral_spacing();
  d.confidence = confidence;
  return d;
}

double hashed_normal(std::uint64_t seed, std::uint64_t index) {
  const double u1 = unit_uniform(stream_seed(seed, index, 1));
  const double u2 = unit_uniform(stream_seed(seed, index, 2));
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Region classify_region(const bmode::BModeFrame& /*frame*/, double z_hint, const std::vector<phantom::RegionBand>& labels,
                       const DetectorNoise& noise, std::uint64_t frame_index) {
  Region truth = labels.empty() ? Region::Thoracic : labels.back().region;
  for (const auto& band : labels) {
    if (z_hint < band.z_end_mm) {
      truth = band.region;
      break;
    }
  }
  if (noise.misclass_rate <= 0.0) return truth;
  const double u = unit_uniform(stream_seed(noise.seed, 0x636c617373ULL, frame_index));
  if (u >= noise.misclass_rate) return truth;
  const int other = unit_uniform(stream_seed(noise.seed, 0x6f74686572ULL, frame_index)) < 0.5 ? 1 : 2;
  return static_cast<Region>((static_cast<int>(truth) + other) % 3);
}

std::optional<Detection> apply_noise(const Detection& d, const DetectorNoise& noise,
                                     std::uint64_t frame_index, double lateral_spacing_mm) {
  if (noise.miss_rate > 0.0 &&
      unit_uniform(stream_seed(noise.seed, 0x6d697373ULL, frame_index)) < noise.miss_rate)
    return std::nullopt;
  if (noise.sigma_mm <= 0.0) return d;
  Detection out = d;
  const double delta = noise.sigma_mm * hashed_normal(stream_seed(noise.seed, 0x6c6f63ULL), frame_index);
  out.lateral_mm += delta;
  out.lateral_px += delta / lateral_spacing_mm;
  return out;
}

}  // namespace spinescan::detector
