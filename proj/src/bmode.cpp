#include "spinescan/bmode.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>

#include "bmode_kernel.hpp"

namespace spinescan::bmode {

namespace detail {

const std::array<float, 4096>& rayleigh_table() {
  static const std::array<float, 4096> table = [] {
    std::array<float, 4096> t{};
    const double mean = std::sqrt(std::numbers::pi / 2.0);
    const double sd = std::sqrt((4.0 - std::numbers::pi) / 2.0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(t.size());
      const double r = std::sqrt(-2.0 * std::log(1.0 - p));
      t[k] = static_cast<float>((r - mean) / sd);
    }
    return t;
  }();
  return table;
}

}  // namespace detail

void validate(const ImagingConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (cfg.width_px < 8 || cfg.height_px < 8) fail("frame must be at least 8x8 pixels");
  if (!(cfg.probe_width_mm > 0.0) || !(cfg.depth_mm > 0.0)) fail("probe geometry must be positive");
  if (cfg.speckle_sigma < 0.0) fail("speckle_sigma must be non-negative");
  if (cfg.shadow_contrast < 0.0 || cfg.shadow_contrast > 1.0) fail("shadow_contrast must lie in [0,1]");
  if (cfg.noise_floor < 0.0 || cfg.noise_floor > 1.0) fail("noise_floor must lie in [0,1]");
  if (!(cfg.frame_rate_hz > 0.0)) fail("frame_rate must be positive");
}

Mat3 ProbePose::rotation() const {
  const Eigen::AngleAxisd rz(roll, Vec3::UnitZ());
  const Eigen::AngleAxisd rx(pitch, Vec3::UnitX());
  const Eigen::AngleAxisd ry(yaw, Vec3::UnitY());
  return (rz * rx * ry).toRotationMatrix();
}

void ProbePose::normalize() {
  auto wrap = [](double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
  };
  roll = wrap(roll);
  pitch = wrap(pitch);
  yaw = wrap(yaw);
}

BModeFrame render_frame(const phantom::SpinePhantom& phantom, const ProbePose& pose,
                        const ImagingConfig& cfg, const RenderOptions& opt) {
  BModeFrame f;
  f.width = cfg.width_px;
  f.height = cfg.height_px;
  f.pixels.assign(static_cast<std::size_t>(cfg.width_px) * cfg.height_px, 0);
  f.pose = pose;
  const detail::FrameGeometry g(phantom, pose, cfg, opt);
  int coupled = 0;
#pragma omp parallel for schedule(static) reduction(+ : coupled)
  for (int col = 0; col < cfg.width_px; ++col)
    coupled += detail::render_column(g, cfg, col, f.pixels.data()) ? 1 : 0;
  f.contact_fraction = static_cast<double>(coupled) / cfg.width_px;
  return f;
}

ScanRecording record_scan(std::span<const ProbePose> poses, const phantom::SpinePhantom& phantom,
                          const ImagingConfig& cfg, std::span<const double> loads) {
  validate(cfg);
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "record_scan needs at least one pose");
  if (!loads.empty() && loads.size() != poses.size())
    throw Error(ErrorCode::InvalidArgument, "loads must match poses one to one");
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (!(poses[i].timestamp > poses[i - 1].timestamp)) {
      std::ostringstream os;
      os << "pose timestamps not strictly increasing at index " << i;
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
  }
  ScanRecording rec;
  rec.imaging = cfg;
  rec.frames.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    RenderOptions opt{.frame_index = i, .load_n = loads.empty() ? 0.0 : loads[i]};
    rec.frames.push_back(render_frame(phantom, poses[i], cfg, opt));
  }
  return rec;
}

}  // namespace spinescan::bmode
