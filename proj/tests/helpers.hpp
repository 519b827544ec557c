#pragma once

#include <cstdint>
#include <vector>

#include "spinescan/bmode.hpp"
#include "spinescan/phantom.hpp"

namespace testing {

// Straight spine under a flat back: skin at y = 0, spinous tips at y = 15.
inline spinescan::phantom::SpinePhantom flat_phantom() {
  spinescan::phantom::PhantomConfig pc;
  pc.sagittal_amplitude_mm = 0.0;
  return spinescan::phantom::build_phantom(pc);
}

inline spinescan::phantom::SpinePhantom curve_phantom(double apex, double angle,
                                                      spinescan::Side side = spinescan::Side::Right) {
  spinescan::phantom::PhantomConfig pc;
  pc.curves = {{apex, angle, side, 0.0}};
  return spinescan::phantom::build_phantom(pc);
}

// Probe resting on the flat back with its lateral axis along +x.
inline spinescan::bmode::ProbePose flat_pose(double x, double z, double lift = 0.0) {
  spinescan::bmode::ProbePose p;
  p.position = {x, -lift, z};
  return p;
}

// Uniform frames along z with the face on y = 0, for reconstruction tests.
inline spinescan::bmode::ScanRecording uniform_recording(int frames, std::uint8_t value, double z0 = 100.0,
                                                         double step = 0.5) {
  spinescan::bmode::ScanRecording rec;
  rec.imaging.width_px = 80;
  rec.imaging.height_px = 60;
  for (int i = 0; i < frames; ++i) {
    spinescan::bmode::BModeFrame f;
    f.width = rec.imaging.width_px;
    f.height = rec.imaging.height_px;
    f.pixels.assign(static_cast<std::size_t>(f.width) * f.height, value);
    f.pose.position = {0.0, 0.0, z0 + i * step};
    f.pose.timestamp = 0.1 * i;
    f.contact_fraction = 1.0;
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

}  // namespace testing
