#pragma once

// Per-column B-mode synthesis shared by the OpenMP renderer and its serial
// reference. A column is a function of geometry and (seed, frame, pixel)
// only, so any column ordering gives the same bytes.

#include <array>
#include <cmath>
#include <cstdint>

#include "spinescan/bmode.hpp"

namespace spinescan::bmode::detail {

namespace tissue {
inline constexpr double kContactLine = 0.8;
inline constexpr double kContactLineDepth = 1.0;  // mm
inline constexpr double kFat = 0.45;
inline constexpr double kFatDepth = 5.0;  // mm below skin
inline constexpr double kMuscle = 0.55;
inline constexpr double kSpinousEcho = 1.0;
inline constexpr double kLaminaEcho = 0.9;
inline constexpr double kLigamentEcho = 0.6;
inline constexpr double kEchoThickness = 1.5;  // mm
inline constexpr double kGapTissue = 0.8;      // relative brightness in interspinous space
}  // namespace tissue

// Standardized (zero-mean, unit-variance) Rayleigh deviates indexed by 12 hash bits.
const std::array<float, 4096>& rayleigh_table();

struct FrameGeometry {
  phantom::Sampler sampler;
  Vec3 face_body;      // probe face centre, body frame
  Vec3 lateral_body;   // unit lateral axis, body frame
  Vec3 axial_body;     // unit beam axis, body frame
  double sx, sy;
  double center_px;
  double shadow_gain;  // 1 - shadow_contrast
  std::uint64_t frame_seed;

  FrameGeometry(const phantom::SpinePhantom& ph, const ProbePose& pose, const ImagingConfig& cfg,
                const RenderOptions& opt)
      : sampler(ph.sampler(opt.load_n)),
        sx(cfg.lateral_spacing()),
        sy(cfg.axial_spacing()),
        center_px(cfg.center_px()),
        shadow_gain(1.0 - cfg.shadow_contrast),
        frame_seed(stream_seed(cfg.seed, 0x626d6f6465ULL, opt.frame_index)) {
    const Mat3 r = pose.rotation();
    const Vec3 origin = sampler.to_body(Vec3::Zero());
    face_body = sampler.to_body(pose.position);
    lateral_body = sampler.to_body(r.col(0)) - origin;
    axial_body = sampler.to_body(r.col(1)) - origin;
  }
};

// Base (noise-free) echo intensity at a body-frame point below the face.
inline double base_intensity(const FrameGeometry& g, const Vec3& b, double shadow) {
  using namespace tissue;
  using phantom::Anatomy;
  const auto loc = g.sampler.at(b.z());
  const double h = b.y() - g.sampler.skin_y(loc, b.x());
  if (h < 0.0) return 0.0;  // gel between face and skin
  const double soft = h < kFatDepth ? kFat : kMuscle;
  const double u = std::abs(b.x() - loc.center_x);
  const double dt = b.y() - loc.tip_y;
  if (u < Anatomy::kSpinousHalfWidth && g.sampler.spinous_present(b.z())) {
    if (dt < 0.0) return soft;
    if (dt < kEchoThickness) return kSpinousEcho;
    return soft * shadow;
  }
  if (u <= Anatomy::kLaminaOuter) {
    const bool medial = u < Anatomy::kLaminaInner;
    const double ld = Anatomy::kLaminaDepth +
                      (medial ? 0.0 : Anatomy::kLaminaSlope * (u - Anatomy::kLaminaInner));
    if (dt < ld) return medial ? soft * kGapTissue : soft;
    if (dt < ld + kEchoThickness) return medial ? kLigamentEcho : kLaminaEcho;
    return soft * shadow;
  }
  return soft;
}

inline std::uint8_t quantize(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

// Renders column `col` into `out` (row-major frame buffer); returns true
// when the column is acoustically coupled.
inline bool render_column(const FrameGeometry& g, const ImagingConfig& cfg, int col,
                          std::uint8_t* out) {
  const auto& table = rayleigh_table();
  const double l = (col - g.center_px) * g.sx;
  const Vec3 q = g.face_body + l * g.lateral_body;
  const double gap = g.sampler.skin_y(q.z(), q.x()) - q.y();
  const int W = cfg.width_px;
  const int H = cfg.height_px;
  if (gap > cfg.coupling_threshold_mm) {
    const double nf = cfg.noise_floor * 255.0;
    for (int row = 0; row < H; ++row) {
      const std::uint64_t h = mix64(g.frame_seed ^ (static_cast<std::uint64_t>(row) * W + col));
      out[static_cast<std::size_t>(row) * W + col] =
          static_cast<std::uint8_t>(std::floor(nf * unit_uniform(h)));
    }
    return false;
  }
  const double sigma = cfg.speckle_sigma;
  for (int row = 0; row < H; ++row) {
    const double r = row * g.sy;
    double base;
    if (r < tissue::kContactLineDepth) {
      base = tissue::kContactLine;
    } else {
      base = base_intensity(g, q + r * g.axial_body, g.shadow_gain);
    }
    double v = base;
    if (sigma > 0.0) {
      const std::uint64_t h = mix64(g.frame_seed ^ (static_cast<std::uint64_t>(row) * W + col));
      v = base * (1.0 + sigma * table[h >> 52]);
    }
    out[static_cast<std::size_t>(row) * W + col] = quantize(v);
  }
  return true;
}

}  // namespace spinescan::bmode::detail
