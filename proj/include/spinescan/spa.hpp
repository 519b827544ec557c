#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"

namespace spinescan::spa {

struct PathPoint {
  double z;
  double x;
  bool interpolated = false;
};

struct SpinousPath {
  std::vector<PathPoint> points;  // z strictly increasing
  double smoothness_mm = 0.0;     // RMS residual against the smoothed path
  double coverage = 0.0;          // fraction of imaged rows carrying a point
  int long_gaps = 0;
  std::vector<std::string> flags;

  double z_extent() const { return points.empty() ? 0.0 : points.back().z - points.front().z; }
};

struct ExtractConfig {
  double flank_inner_mm = 4.0;
  double flank_outer_mm = 8.0;
  double centre_half_mm = 1.0;
  double presmooth_sigma_mm = 1.0;
  int max_step_px = 3;
  int max_gap_rows = 10;
  double min_contrast = 0.05;
  double relative_threshold = 0.3;  // of the median per-row best contrast
  double min_coverage = 0.8;
};

// Darkest-ridge tracing with a continuity constraint. The ridge score is a
// valley contrast, (flank - centre) / flank, so it ignores image gain.
SpinousPath extract_path(const recon::CoronalImage& img, const ExtractConfig& cfg = {});

// Median over rows of the best valley contrast; used to pick the slice.
double ridge_contrast(const recon::CoronalImage& img, const ExtractConfig& cfg = {});

struct MeasureConfig {
  double kernel_fwhm_mm = 20.0;
  double resample_mm = 0.5;
  double pivot_threshold_deg = 3.0;
  double end_margin_mm = 10.0;
  double min_length_mm = 100.0;
  double level_pitch_mm = 25.0;
  int max_curves = 2;
};

// Tangent-angle profile of the smoothed path, sampled uniformly in z.
struct TangentProfile {
  double z0 = 0.0;
  double dz = 0.5;
  std::vector<double> x;          // smoothed lateral position
  std::vector<double> angle_deg;  // atan(dx/dz)

  double angle_at(double z) const;
};

TangentProfile tangent_profile(const SpinousPath& path, const MeasureConfig& cfg = {});

std::vector<phantom::CurveAngle> measure_spa(const SpinousPath& path, const MeasureConfig& cfg = {});

struct RaterModel {
  double angle_sigma_deg = 0.0;
  double level_jitter = 0.0;  // std dev of end-vertebra placement, in levels
  double bias_deg = 0.0;
  std::uint64_t seed = 0;
};

void validate(const RaterModel& r);

// One rating per curve. Level jitter needs the path the curves came from and
// is ignored without it.
std::vector<double> rate(const std::vector<phantom::CurveAngle>& angles, const RaterModel& rater,
                         std::uint64_t scan_id, const SpinousPath* path = nullptr,
                         const MeasureConfig& cfg = {});

}  // namespace spinescan::spa
