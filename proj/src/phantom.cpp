#include "spinescan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spinescan::phantom {

namespace {

// Slope extremum magnitude of a unit Gaussian bump of width w is exp(-1/2)/w.
constexpr double kBumpPeakSlope = 0.60653065971263342;
constexpr double kLutMargin = 80.0;

struct Extremum {
  double z;
  double slope;
};

// Strict local extrema of `slope` over [z0, z1], refined to sub-grid accuracy
// by golden-section search on the bracketing cell pair.
template <typename F>
std::vector<Extremum> slope_extrema(F slope, double z0, double z1, double step) {
  std::vector<Extremum> out;
  const int n = static_cast<int>(std::ceil((z1 - z0) / step));
  if (n < 2) return out;
  std::vector<double> s(n + 1);
  for (int i = 0; i <= n; ++i) s[i] = slope(z0 + i * step);
  for (int i = 1; i < n; ++i) {
    const bool is_max = s[i] > s[i - 1] && s[i] >= s[i + 1];
    const bool is_min = s[i] < s[i - 1] && s[i] <= s[i + 1];
    if (!is_max && !is_min) continue;
    const double sign = is_max ? 1.0 : -1.0;
    double a = z0 + (i - 1) * step, b = z0 + (i + 1) * step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    for (int it = 0; it < 60; ++it) {
      if (sign * slope(c) > sign * slope(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - g * (b - a);
      d = a + g * (b - a);
    }
    const double z = 0.5 * (a + b);
    out.push_back({z, slope(z)});
  }
  return out;
}

double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

void validate(const PhantomConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (cfg.n_vertebrae < 6) fail("n_vertebrae must be at least 6");
  if (!(cfg.spine_length_mm > 0.0)) fail("spine_length must be positive");
  if (!(cfg.back_stiffness_n_per_mm > 0.0)) fail("back_stiffness must be positive");
  if (!(cfg.skin_offset_mm > 0.0)) fail("skin_offset must be positive");
  if (cfg.torso_compliance_deg_per_n < 0.0) fail("torso_compliance must be non-negative");
  if (cfg.scapula_gap_mm < 0.0) fail("scapula_gap must be non-negative");
  if (std::abs(cfg.coronal_surface_tilt_deg) >= 45.0) fail("coronal_surface_tilt out of range");
  if (cfg.curves.size() > 2) fail("at most two curves are supported");
  for (const auto& c : cfg.curves) {
    if (!(c.target_spa_deg >= 0.0 && c.target_spa_deg <= 45.0))
      fail("target_spa must lie in [0, 45] degrees");
    if (c.apex_level < 0.0 || c.apex_level > cfg.n_vertebrae - 1)
      fail("apex_level outside the vertebral column");
    if (c.width_levels < 0.0) fail("width_levels must be non-negative");
  }
  if (cfg.curves.size() == 2 &&
      std::abs(cfg.curves[0].apex_level - cfg.curves[1].apex_level) < 3.0) {
    std::ostringstream os;
    os << "curve apexes at levels " << cfg.curves[0].apex_level << " and "
       << cfg.curves[1].apex_level << " are closer than 3 vertebral levels";
    throw Error(ErrorCode::InfeasibleConfig, os.str());
  }
}

double SpinePhantom::curve_width(std::size_t i) const {
  const auto& c = cfg_.curves[i];
  double levels = c.width_levels;
  if (levels <= 0.0)
    levels = c.apex_level < 5.5 ? Anatomy::kLumbarWidthLevels : Anatomy::kThoracicWidthLevels;
  return levels * level_pitch();
}

double SpinePhantom::raw_x(double zb) const {
  double x = 0.0;
  for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
    const double u = (zb - centers_[i]) / widths_[i];
    x += amplitudes_[i] * std::exp(-0.5 * u * u);
  }
  return x;
}

double SpinePhantom::raw_slope(double zb) const {
  double s = 0.0;
  for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
    const double u = (zb - centers_[i]) / widths_[i];
    s += -amplitudes_[i] * u / widths_[i] * std::exp(-0.5 * u * u);
  }
  return s;
}

double SpinePhantom::bend_scale(double load_n) const {
  const double deg = cfg_.torso_compliance_deg_per_n * std::max(load_n, 0.0);
  if (deg <= 0.0) return 0.0;
  return bend_sign_ * std::tan(0.5 * deg * kDegToRad) * bend_width_ / kBumpPeakSlope;
}

std::pair<double, double> SpinePhantom::centerline_body(double zb, double load_n) const {
  double x = raw_x(zb);
  if (load_n > 0.0) {
    const double u = (zb - bend_center_) / bend_width_;
    x += bend_scale(load_n) * std::exp(-0.5 * u * u);
  }
  const double sag = cfg_.sagittal_amplitude_mm *
                     std::sin(2.0 * std::numbers::pi * zb / cfg_.spine_length_mm);
  const double dsag = cfg_.sagittal_amplitude_mm * 2.0 * std::numbers::pi /
                      cfg_.spine_length_mm *
                      std::cos(2.0 * std::numbers::pi * zb / cfg_.spine_length_mm);
  const double tt = std::tan(cfg_.coronal_surface_tilt_deg * kDegToRad);
  const double y = sag + tt * x + cfg_.skin_offset_mm * std::sqrt(1.0 + tt * tt + dsag * dsag);
  return {x, y};
}

double SpinePhantom::slope_body(double zb, double load_n) const {
  double s = raw_slope(zb);
  if (load_n > 0.0) {
    const double u = (zb - bend_center_) / bend_width_;
    s += -bend_scale(load_n) * u / bend_width_ * std::exp(-0.5 * u * u);
  }
  return s;
}

Vec3 SpinePhantom::to_world(const Vec3& b) const {
  const double t = posture_.coronal_tilt_deg * kDegToRad;
  const double c = std::cos(t), s = std::sin(t);
  return {s * b.z() + c * b.x() + posture_.shift_x_mm, b.y() + posture_.shift_y_mm,
          c * b.z() - s * b.x() + posture_.shift_z_mm};
}

Vec3 SpinePhantom::to_body(const Vec3& w) const {
  const double t = posture_.coronal_tilt_deg * kDegToRad;
  const double c = std::cos(t), s = std::sin(t);
  const double dz = w.z() - posture_.shift_z_mm;
  const double dx = w.x() - posture_.shift_x_mm;
  return {-s * dz + c * dx, w.y() - posture_.shift_y_mm, c * dz + s * dx};
}

Vec3 SpinePhantom::centerline_world(double zw, double load_n) const {
  const double t = posture_.coronal_tilt_deg * kDegToRad;
  const double c = std::cos(t), s = std::sin(t);
  // Solve c*zb - s*x(zb) + shift_z = zw for zb by Newton.
  double zb = zw - posture_.shift_z_mm;
  for (int it = 0; it < 30; ++it) {
    const double x = centerline_body(zb, load_n).first;
    const double f = c * zb - s * x + posture_.shift_z_mm - zw;
    const double df = c - s * slope_body(zb, load_n);
    const double step = f / df;
    zb -= step;
    if (std::abs(step) < 1e-12) break;
  }
  const auto [x, y] = centerline_body(zb, load_n);
  return to_world({x, y, zb});
}

std::vector<Vec3> SpinePhantom::spinous_tips() const {
  std::vector<Vec3> tips;
  tips.reserve(cfg_.n_vertebrae);
  for (int i = 0; i < cfg_.n_vertebrae; ++i) {
    const double zb = level_to_z(i);
    const auto [x, y] = centerline_body(zb);
    tips.push_back(to_world({x, y, zb}));
  }
  return tips;
}

std::vector<RegionBand> SpinePhantom::region_boundaries() const {
  const double p = level_pitch();
  const double dz = posture_.shift_z_mm;
  // One sacral level, five lumbar, the remainder thoracic.
  return {{Region::Sacrum, dz + 0.0, dz + 1.0 * p},
          {Region::Lumbar, dz + 1.0 * p, dz + 6.0 * p},
          {Region::Thoracic, dz + 6.0 * p, dz + cfg_.spine_length_mm}};
}

Region SpinePhantom::region_at(double zw) const {
  for (const auto& band : region_boundaries())
    if (zw < band.z_end_mm) return band.region;
  return Region::Thoracic;
}

double SpinePhantom::z_min() const { return posture_.shift_z_mm; }
double SpinePhantom::z_max() const { return posture_.shift_z_mm + cfg_.spine_length_mm; }

SpinePhantom SpinePhantom::with_posture(const Posture& p) const {
  SpinePhantom out = *this;
  out.posture_ = p;
  return out;
}

void SpinePhantom::build_tables() {
  const double L = cfg_.spine_length_mm;
  lut_z0_ = -kLutMargin;
  const auto n = static_cast<std::size_t>(std::ceil((L + 2.0 * kLutMargin) / lut_dz_)) + 1;
  lut_base_x_.resize(n);
  lut_bend_.resize(n);
  lut_sag_.resize(n);
  lut_offset_.resize(n);
  lut_scap_z_.resize(n);
  const double tt = std::tan(cfg_.coronal_surface_tilt_deg * kDegToRad);
  const double w = 2.0 * std::numbers::pi / L;
  const double p = level_pitch();
  // Scapulae span the upper thoracic levels; edges ramp over one level.
  const double scap_lo = (cfg_.n_vertebrae - 7.0) * p;
  const double scap_hi = (cfg_.n_vertebrae - 1.5) * p;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = lut_z0_ + static_cast<double>(i) * lut_dz_;
    lut_base_x_[i] = raw_x(z);
    const double u = (z - bend_center_) / bend_width_;
    lut_bend_[i] = std::exp(-0.5 * u * u);
    lut_sag_[i] = cfg_.sagittal_amplitude_mm * std::sin(w * z);
    const double dsag = cfg_.sagittal_amplitude_mm * w * std::cos(w * z);
    lut_offset_[i] = cfg_.skin_offset_mm * std::sqrt(1.0 + tt * tt + dsag * dsag);
    lut_scap_z_[i] = smoothstep((z - scap_lo) / p) * smoothstep((scap_hi - z) / p);
  }
}

SpinePhantom build_phantom(const PhantomConfig& config) {
  validate(config);
  SpinePhantom ph;
  ph.cfg_ = config;
  // Curves with zero target contribute nothing; drop them up front.
  std::erase_if(ph.cfg_.curves, [](const CurveSpec& c) { return c.target_spa_deg <= 0.0; });
  const auto& curves = ph.cfg_.curves;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double w = ph.curve_width(i);
    const double sign = curves[i].direction == Side::Right ? 1.0 : -1.0;
    ph.widths_.push_back(w);
    ph.centers_.push_back(ph.level_to_z(curves[i].apex_level));
    ph.amplitudes_.push_back(sign * std::tan(0.5 * curves[i].target_spa_deg * kDegToRad) * w /
                             kBumpPeakSlope);
  }

  // Fixed-point amplitude solve: overlapping bumps interact, so rescale each
  // amplitude by the ratio of half-angle tangents until every curve hits its
  // target.
  for (int it = 0; it < 200 && !curves.empty(); ++it) {
    ph.ground_truth_ = ground_truth_spa(ph);
    if (ph.ground_truth_.size() != curves.size())
      throw Error(ErrorCode::InfeasibleConfig,
                  "curve extrema could not be bracketed inside the spine");
    double worst = 0.0;
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const double got = ph.ground_truth_[i].angle_deg;
      const double want = curves[i].target_spa_deg;
      worst = std::max(worst, std::abs(got - want));
      ph.amplitudes_[i] *= std::tan(0.5 * want * kDegToRad) / std::tan(0.5 * got * kDegToRad);
    }
    if (worst < 1e-7) break;
  }

  // Lumbar bend under probe load: follows the lumbar curve's direction if
  // there is one, otherwise bends to the right.
  ph.bend_center_ = ph.level_to_z(3.0);
  ph.bend_width_ = Anatomy::kLumbarWidthLevels * ph.level_pitch();
  ph.bend_sign_ = 1.0;
  for (const auto& c : curves)
    if (c.apex_level < 5.5) ph.bend_sign_ = c.direction == Side::Right ? 1.0 : -1.0;

  ph.ground_truth_ = ground_truth_spa(ph);
  ph.build_tables();
  return ph;
}

std::vector<CurveAngle> ground_truth_spa(const SpinePhantom& phantom) {
  const auto& curves = phantom.config().curves;
  std::vector<CurveAngle> out;
  if (curves.empty()) return out;
  const double L = phantom.config().spine_length_mm;
  const auto ext = slope_extrema([&](double z) { return phantom.slope_body(z); }, 0.0, L, 0.5);
  for (const auto& c : curves) {
    const double apex = phantom.level_to_z(c.apex_level);
    const Extremum* lower = nullptr;
    const Extremum* upper = nullptr;
    for (const auto& e : ext) {
      if (e.z < apex) lower = &e;
      if (e.z > apex && upper == nullptr) upper = &e;
    }
    if (lower == nullptr || upper == nullptr) continue;
    const double th_l = std::atan(lower->slope) * kRadToDeg;
    const double th_u = std::atan(upper->slope) * kRadToDeg;
    CurveAngle a;
    a.angle_deg = std::abs(th_u - th_l);
    a.lower_z_mm = lower->z;
    a.upper_z_mm = upper->z;
    a.lower_level = phantom.z_to_level(lower->z);
    a.upper_level = phantom.z_to_level(upper->z);
    a.direction = th_l > th_u ? Side::Right : Side::Left;
    out.push_back(a);
  }
  return out;
}

SurfacePoint surface_query(const SpinePhantom& phantom, double z, double x) {
  const auto s = phantom.sampler();
  const Vec3 b = s.to_body({x, 0.0, z});
  if (b.z() < 0.0 || b.z() > phantom.config().spine_length_mm ||
      std::abs(b.x() - s.center_x(b.z())) > 150.0) {
    std::ostringstream os;
    os << "surface query (z=" << z << ", x=" << x << ") outside phantom extent";
    throw Error(ErrorCode::OutOfRange, os.str());
  }
  const double h = 1e-3;
  const double y = s.skin_y(b.z(), b.x());
  const double dydx = (s.skin_y(b.z(), b.x() + h) - s.skin_y(b.z(), b.x() - h)) / (2 * h);
  const double dydz = (s.skin_y(b.z() + h, b.x()) - s.skin_y(b.z() - h, b.x())) / (2 * h);
  // Outward is toward decreasing depth: gradient of (f(z,x) - y).
  Vec3 nb(dydx, -1.0, dydz);
  nb.normalize();
  const Vec3 pw = phantom.to_world({b.x(), y, b.z()});
  const Vec3 tip = phantom.to_world(nb);
  const Vec3 origin = phantom.to_world(Vec3::Zero());
  Vec3 nw = tip - origin;
  nw.normalize();
  return {pw, nw};
}

Sampler::Sampler(const SpinePhantom& phantom, double load_n)
    : ph_(&phantom),
      bend_scale_(phantom.bend_scale(load_n)),
      z0_(phantom.lut_z0_),
      inv_dz_(1.0 / phantom.lut_dz_),
      cos_t_(std::cos(phantom.posture_.coronal_tilt_deg * kDegToRad)),
      sin_t_(std::sin(phantom.posture_.coronal_tilt_deg * kDegToRad)),
      shift_x_(phantom.posture_.shift_x_mm),
      shift_y_(phantom.posture_.shift_y_mm),
      shift_z_(phantom.posture_.shift_z_mm),
      tan_surface_(std::tan(phantom.cfg_.coronal_surface_tilt_deg * kDegToRad)),
      half_gap_(0.5 * phantom.cfg_.scapula_gap_mm) {}

double Sampler::center_slope(double zb) const {
  const double h = 0.25;
  return (center_x(zb + h) - center_x(zb - h)) / (2.0 * h);
}

double Sampler::stiffness_scale(double zb, double xb) const {
  return 1.0 + (Anatomy::kScapulaStiffness - 1.0) * scapula_weight(zb, xb);
}

bool Sampler::in_extent(double zb) const {
  return zb >= 0.0 && zb <= ph_->cfg_.spine_length_mm;
}

}  // namespace spinescan::phantom
