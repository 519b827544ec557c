#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinescan/common.hpp"
#include "spinescan/phantom.hpp"

namespace spinescan::bmode {

struct ImagingConfig {
  int width_px = 640;
  int height_px = 480;
  double probe_width_mm = 80.0;
  double depth_mm = 60.0;
  double speckle_sigma = 0.5;
  double shadow_contrast = 0.85;
  double noise_floor = 0.02;
  double frame_rate_hz = 10.0;
  double coupling_threshold_mm = 1.0;
  std::uint64_t seed = 0;

  double lateral_spacing() const { return probe_width_mm / width_px; }
  double axial_spacing() const { return depth_mm / height_px; }
  double center_px() const { return 0.5 * width_px; }
};

void validate(const ImagingConfig& cfg);

// Probe pose. Orientation is R = Rz(roll) * Rx(pitch) * Ry(yaw) applied to
// the resting axes lateral = +x, axial (beam) = +y, elevation = +z.
struct ProbePose {
  Vec3 position = Vec3::Zero();  // centre of the probe face, mm
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double timestamp = 0.0;

  Mat3 rotation() const;
  Vec3 lateral() const { return rotation().col(0); }
  Vec3 axial() const { return rotation().col(1); }
  Vec3 elevation() const { return rotation().col(2); }
  // Wraps angles into (-pi, pi].
  void normalize();
};

struct BModeFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 255 == intensity 1.0
  ProbePose pose;
  double contact_fraction = 0.0;

  std::uint8_t at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double intensity(int col, int row) const { return at(col, row) / 255.0; }
};

struct ScanRecording {
  ImagingConfig imaging;
  std::vector<BModeFrame> frames;
  nlohmann::json metadata = nlohmann::json::object();
};

struct RenderOptions {
  std::uint64_t frame_index = 0;
  double load_n = 0.0;  // probe force acting on the torso (compliance model)
};

BModeFrame render_frame(const phantom::SpinePhantom& phantom, const ProbePose& pose,
                        const ImagingConfig& cfg, const RenderOptions& opt = {});

ScanRecording record_scan(std::span<const ProbePose> poses, const phantom::SpinePhantom& phantom,
                          const ImagingConfig& cfg, std::span<const double> loads = {});

// Single-threaded reference renderer; bit-identical to render_frame.
namespace serial {
BModeFrame render_frame(const phantom::SpinePhantom& phantom, const ProbePose& pose,
                        const ImagingConfig& cfg, const RenderOptions& opt = {});
}

}  // namespace spinescan::bmode
