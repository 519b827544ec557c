#include <algorithm>

#include "spinescan/controller.hpp"

namespace spinescan::controller {

namespace {
constexpr int kLateralNodes = 17;
constexpr int kElevationNodes = 5;
}  // namespace

ContactReading probe_contact(const phantom::Sampler& sampler, const bmode::ProbePose& pose,
                             double probe_width_mm, double elevation_mm) {
  const Mat3 r = pose.rotation();
  const Vec3 lat = r.col(0);
  const Vec3 elev = r.col(2);
  const double k = sampler.phantom().config().back_stiffness_n_per_mm;
  constexpr double n = kLateralNodes * kElevationNodes;

  ContactReading out;
  int touching = 0;
  for (int j = 0; j < kElevationNodes; ++j) {
    const double e = elevation_mm * (static_cast<double>(j) / (kElevationNodes - 1) - 0.5);
    for (int i = 0; i < kLateralNodes; ++i) {
      const double u = probe_width_mm * (static_cast<double>(i) / (kLateralNodes - 1) - 0.5);
      const Vec3 b = sampler.to_body(pose.position + u * lat + e * elev);
      if (!sampler.in_extent(b.z())) continue;
      const double d = b.y() - sampler.skin_y(b.z(), b.x());
      if (d < -1.0) continue;
      ++touching;
      if (d <= 0.0) continue;
      const double f = k * sampler.stiffness_scale(b.z(), b.x()) * d / n;
      out.force_n += f;
      out.torque_x_nm -= f * e * 1e-3;
      out.max_penetration_mm = std::max(out.max_penetration_mm, d);
    }
  }
  out.contact_fraction = touching / n;
  return out;
}

}  // namespace spinescan::controller
