#include <cmath>

#include "spinescan/controller.hpp"

namespace spinescan::controller {

SpineTrack SpineTrack::start(double z, double x, double var_x, double var_v) {
  SpineTrack t;
  t.state = {x, 0.0};
  t.covariance = Eigen::Matrix2d{{var_x, 0.0}, {0.0, var_v}};
  t.last_z = z;
  t.initialized = true;
  t.history.emplace_back(z, x);
  return t;
}

SpineTrack kalman_step(const SpineTrack& track, double z, std::optional<double> measurement_x,
                       const KalmanConfig& cfg) {
  if (!track.initialized) {
    if (!measurement_x) return track;
    return SpineTrack::start(z, *measurement_x, cfg.measurement_noise);
  }
  const double dz = z - track.last_z;
  if (!(dz > 0.0)) throw Error(ErrorCode::InvalidArgument, "kalman_step requires increasing z");

  SpineTrack out = track;
  const Eigen::Matrix2d f{{1.0, dz}, {0.0, 1.0}};
  const double q = cfg.process_noise;
  const Eigen::Matrix2d qm{{q * dz * dz * dz / 3.0, q * dz * dz / 2.0}, {q * dz * dz / 2.0, q * dz}};
  out.state = f * track.state;
  out.covariance = f * track.covariance * f.transpose() + qm;

  if (measurement_x) {
    const double innovation = *measurement_x - out.state(0);
    if (std::abs(innovation) <= cfg.gate_mm) {
      const double s = out.covariance(0, 0) + cfg.measurement_noise;
      const Eigen::Vector2d k = out.covariance.col(0) / s;
      out.state += k * innovation;
      // Joseph form keeps the covariance symmetric positive-definite.
      const Eigen::Matrix2d ikh = Eigen::Matrix2d::Identity() - k * Eigen::RowVector2d(1.0, 0.0);
      out.covariance = ikh * out.covariance * ikh.transpose() +
                       k * cfg.measurement_noise * k.transpose();
    }
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.last_z = z;
  out.history.emplace_back(z, out.state(0));
  return out;
}

}  // namespace spinescan::controller
