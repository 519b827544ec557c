#include "bmode_kernel.hpp"

namespace spinescan::bmode::serial {

BModeFrame render_frame(const phantom::SpinePhantom& phantom, const ProbePose& pose,
                        const ImagingConfig& cfg, const RenderOptions& opt) {
  BModeFrame f;
  f.width = cfg.width_px;
  f.height = cfg.height_px;
  f.pixels.assign(static_cast<std::size_t>(cfg.width_px) * cfg.height_px, 0);
  f.pose = pose;
  const detail::FrameGeometry g(phantom, pose, cfg, opt);
  int coupled = 0;
  for (int col = 0; col < cfg.width_px; ++col)
    if (detail::render_column(g, cfg, col, f.pixels.data())) ++coupled;
  f.contact_fraction = static_cast<double>(coupled) / cfg.width_px;
  return f;
}

}  // namespace spinescan::bmode::serial
