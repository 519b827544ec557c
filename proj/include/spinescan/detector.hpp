#pragma once

#include <cstdint>
#include <optional>

#include "spinescan/bmode.hpp"
#include "spinescan/common.hpp"
#include "spinescan/phantom.hpp"

namespace spinescan::detector {

struct Detection {
  double lateral_px = 0.0;
  double lateral_mm = 0.0;  // from the frame centre, along the probe's lateral axis
  double confidence = 0.0;
  Region region = Region::Sacrum;
};

struct DetectorConfig {
  double confidence_threshold = 0.3;
  double kernel_mm = 3.0;        // width of the column smoothing window
  double skip_top_mm = 2.0;      // ignore the probe/skin contact line
  double dead_column_ratio = 0.1;
};

struct DetectorNoise {
  double sigma_mm = 0.0;
  double miss_rate = 0.0;
  double misclass_rate = 0.0;
  std::uint64_t seed = 0;
};

void validate(const DetectorNoise& noise);

// Column-wise shadow scoring: each column's mean echo below the contact line
// forms a 1-D darkness profile; the centre of the darkest smoothed run of
// columns is the spinous process. Confidence is the relative darkness of that column against the
// frame's coupled-column average, so it is unchanged by uniform gain.
std::optional<Detection> detect(const bmode::BModeFrame& frame, const bmode::ImagingConfig& imaging,
                                const DetectorConfig& cfg = {});

Region classify_region(const bmode::BModeFrame& frame, double z_hint,
                       const std::vector<phantom::RegionBand>& labels,
                       const DetectorNoise& noise, std::uint64_t frame_index);

std::optional<Detection> apply_noise(const Detection& d, const DetectorNoise& noise,
                                     std::uint64_t frame_index, double lateral_spacing_mm);

// Standard normal deviate from a hash stream (Box-Muller on two draws).
double hashed_normal(std::uint64_t seed, std::uint64_t index);

}  // namespace spinescan::detector
