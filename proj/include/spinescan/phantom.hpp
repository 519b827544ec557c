#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "spinescan/common.hpp"

namespace spinescan::phantom {

struct CurveSpec {
  double apex_level = 0.0;       // fractional vertebra index, 0 = S1
  double target_spa_deg = 0.0;
  Side direction = Side::Right;
  double width_levels = 0.0;     // 0 selects the regional default
};

struct PhantomConfig {
  int n_vertebrae = 18;
  double spine_length_mm = 450.0;
  std::vector<CurveSpec> curves;
  double sagittal_amplitude_mm = 8.0;
  double skin_offset_mm = 15.0;
  double back_stiffness_n_per_mm = 2.0;
  double torso_compliance_deg_per_n = 0.0;
  double scapula_gap_mm = 0.0;   // 0 means the scapulae are not prominent
  double coronal_surface_tilt_deg = 0.0;
  std::uint64_t seed = 0;
};

void validate(const PhantomConfig& cfg);

// Rigid posture of the subject: rotation in the coronal plane about the
// sacral origin followed by a shift.
struct Posture {
  double coronal_tilt_deg = 0.0;
  double shift_x_mm = 0.0;
  double shift_y_mm = 0.0;
  double shift_z_mm = 0.0;
};

struct CurveAngle {
  double angle_deg = 0.0;
  double upper_level = 0.0;
  double lower_level = 0.0;
  Side direction = Side::Right;
  double upper_z_mm = 0.0;
  double lower_z_mm = 0.0;

  double apex_z_mm() const { return 0.5 * (upper_z_mm + lower_z_mm); }
};

struct RegionBand {
  Region region;
  double z_begin_mm;
  double z_end_mm;
};

// Geometry constants of the synthetic anatomy that are not configuration.
struct Anatomy {
  static constexpr double kSpinousHalfWidth = 3.0;
  static constexpr double kIntervertebralGap = 4.0;
  static constexpr double kLaminaInner = 4.5;
  static constexpr double kLaminaOuter = 22.0;
  static constexpr double kLaminaDepth = 11.0;   // below the spinous tip
  static constexpr double kLaminaSlope = 0.15;
  static constexpr double kScapulaHeight = 9.0;
  static constexpr double kScapulaRamp = 6.0;
  static constexpr double kScapulaStiffness = 8.0;  // multiplier over soft tissue
  static constexpr double kLumbarWidthLevels = 1.8;
  static constexpr double kThoracicWidthLevels = 2.6;
};

class SpinePhantom;

// Lookup-table view of a phantom under a given probe load. Cheap to copy;
// the phantom must outlive it.
class Sampler {
 public:
  Sampler(const SpinePhantom& phantom, double load_n);

  const SpinePhantom& phantom() const { return *ph_; }

  Vec3 to_body(const Vec3& world) const {
    const double dz = world.z() - shift_z_;
    const double dx = world.x() - shift_x_;
    return {-sin_t_ * dz + cos_t_ * dx, world.y() - shift_y_, cos_t_ * dz + sin_t_ * dx};
  }
  Vec3 to_world(const Vec3& body) const {
    return {sin_t_ * body.z() + cos_t_ * body.x() + shift_x_, body.y() + shift_y_,
            cos_t_ * body.z() - sin_t_ * body.x() + shift_z_};
  }

  // All z-dependent quantities at one body z, from a single table lookup.
  struct Local {
    double center_x;
    double sagittal;
    double tip_y;
    double scapula_z;
  };
  inline Local at(double zb) const;
  inline double skin_y(const Local& l, double xb) const;

  inline double center_x(double zb) const;
  double center_slope(double zb) const;
  inline double sagittal(double zb) const;
  inline double tip_y(double zb) const;
  inline double skin_y(double zb, double xb) const;
  inline bool spinous_present(double zb) const;
  inline double scapula_weight(double zb, double xb) const;
  double stiffness_scale(double zb, double xb) const;
  bool in_extent(double zb) const;

 private:
  inline double lut(const std::vector<double>& t, double zb) const;

  const SpinePhantom* ph_;
  double bend_scale_;
  double z0_, inv_dz_;
  double cos_t_, sin_t_;
  double shift_x_, shift_y_, shift_z_;
  double tan_surface_;
  double half_gap_;
};

class SpinePhantom {
 public:
  const PhantomConfig& config() const { return cfg_; }
  const Posture& posture() const { return posture_; }
  const std::vector<double>& amplitudes() const { return amplitudes_; }
  double level_pitch() const { return cfg_.spine_length_mm / cfg_.n_vertebrae; }
  double level_to_z(double level) const { return (level + 0.5) * level_pitch(); }
  double z_to_level(double z) const { return z / level_pitch() - 0.5; }

  // Body-frame centerline (x coronal deviation, y tip depth) at body z.
  std::pair<double, double> centerline_body(double zb, double load_n = 0.0) const;
  double slope_body(double zb, double load_n = 0.0) const;
  // World-frame centerline point at world z.
  Vec3 centerline_world(double zw, double load_n = 0.0) const;
  std::vector<Vec3> spinous_tips() const;
  std::vector<RegionBand> region_boundaries() const;
  Region region_at(double zw) const;
  const std::vector<CurveAngle>& ground_truth() const { return ground_truth_; }

  // World-z range covered by the phantom's spine.
  double z_min() const;
  double z_max() const;

  SpinePhantom with_posture(const Posture& p) const;
  Sampler sampler(double load_n = 0.0) const { return Sampler(*this, load_n); }

  Vec3 to_world(const Vec3& body) const;
  Vec3 to_body(const Vec3& world) const;

  // Unit vector of the lumbar bend used by the compliance model, and the
  // curve amplitude that bend reaches under `load_n`.
  double bend_scale(double load_n) const;

 private:
  friend SpinePhantom build_phantom(const PhantomConfig&);
  friend class Sampler;

  double curve_width(std::size_t i) const;
  double raw_x(double zb) const;
  double raw_slope(double zb) const;
  void build_tables();

  PhantomConfig cfg_;
  Posture posture_;
  std::vector<double> amplitudes_;
  std::vector<double> widths_;
  std::vector<double> centers_;
  double bend_center_ = 0.0;
  double bend_width_ = 1.0;
  double bend_sign_ = 1.0;
  std::vector<CurveAngle> ground_truth_;

  double lut_z0_ = 0.0;
  double lut_dz_ = 0.25;
  std::vector<double> lut_base_x_;
  std::vector<double> lut_bend_;
  std::vector<double> lut_sag_;
  std::vector<double> lut_offset_;
  std::vector<double> lut_scap_z_;
};

inline double Sampler::lut(const std::vector<double>& t, double zb) const {
  const double f = (zb - z0_) * inv_dz_;
  if (f <= 0.0) return t.front();
  const auto n = t.size() - 1;
  if (f >= static_cast<double>(n)) return t.back();
  const auto i = static_cast<std::size_t>(f);
  const double w = f - static_cast<double>(i);
  return t[i] + w * (t[i + 1] - t[i]);
}

inline double Sampler::center_x(double zb) const {
  return lut(ph_->lut_base_x_, zb) + bend_scale_ * lut(ph_->lut_bend_, zb);
}

inline double Sampler::sagittal(double zb) const { return lut(ph_->lut_sag_, zb); }

inline double Sampler::tip_y(double zb) const {
  return sagittal(zb) + tan_surface_ * center_x(zb) + lut(ph_->lut_offset_, zb);
}

inline double Sampler::scapula_weight(double zb, double xb) const {
  if (half_gap_ <= 0.0) return 0.0;
  const double wz = lut(ph_->lut_scap_z_, zb);
  if (wz <= 0.0) return 0.0;
  const double t = (std::abs(xb - center_x(zb)) - half_gap_) / Anatomy::kScapulaRamp;
  if (t <= 0.0) return 0.0;
  const double s = t >= 1.0 ? 1.0 : t * t * (3.0 - 2.0 * t);
  return wz * s;
}

inline bool Sampler::spinous_present(double zb) const {
  const double p = ph_->level_pitch();
  const double f = zb / p;
  const double phase = f - std::floor(f);  // 0.5 at the level centre
  return std::abs(phase - 0.5) * p < 0.5 * (p - Anatomy::kIntervertebralGap);
}

inline Sampler::Local Sampler::at(double zb) const {
  double f = (zb - z0_) * inv_dz_;
  const auto n = ph_->lut_sag_.size() - 1;
  f = std::clamp(f, 0.0, static_cast<double>(n) - 1e-9);
  const auto i = static_cast<std::size_t>(f);
  const double w = f - static_cast<double>(i);
  auto get = [&](const std::vector<double>& t) { return t[i] + w * (t[i + 1] - t[i]); };
  Local l;
  l.center_x = get(ph_->lut_base_x_) + bend_scale_ * get(ph_->lut_bend_);
  l.sagittal = get(ph_->lut_sag_);
  l.tip_y = l.sagittal + tan_surface_ * l.center_x + get(ph_->lut_offset_);
  l.scapula_z = half_gap_ > 0.0 ? get(ph_->lut_scap_z_) : 0.0;
  return l;
}

inline double Sampler::skin_y(const Local& l, double xb) const {
  double y = l.sagittal + tan_surface_ * xb;
  if (l.scapula_z > 0.0) {
    const double t = (std::abs(xb - l.center_x) - half_gap_) / Anatomy::kScapulaRamp;
    if (t > 0.0) {
      const double s = t >= 1.0 ? 1.0 : t * t * (3.0 - 2.0 * t);
      y -= Anatomy::kScapulaHeight * l.scapula_z * s;
    }
  }
  return y;
}

inline double Sampler::skin_y(double zb, double xb) const {
  return sagittal(zb) + tan_surface_ * xb - Anatomy::kScapulaHeight * scapula_weight(zb, xb);
}

SpinePhantom build_phantom(const PhantomConfig& config);

// Curve angles of a centerline given by its slope function, bracketing each
// apex by the nearest slope extrema below and above it.
std::vector<CurveAngle> ground_truth_spa(const SpinePhantom& phantom);

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;  // unit, pointing out of the body
};

SurfacePoint surface_query(const SpinePhantom& phantom, double z, double x);

}  // namespace spinescan::phantom
