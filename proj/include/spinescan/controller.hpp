#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "spinescan/bmode.hpp"
#include "spinescan/common.hpp"
#include "spinescan/detector.hpp"
#include "spinescan/phantom.hpp"

namespace spinescan::controller {

enum class Mode { Robotic, Manual };
enum class Phase { Approach, Contact, Scanning, Done };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);
std::string_view to_string(Phase p);

// Incremental force PID: output is a displacement (mm) along the beam axis
// per control tick.
struct PidGains {
  double kp = 0.08;    // mm/N
  double ki = 0.02;    // mm/(N s)
  double kd = 0.0005;  // mm s/N
};

struct KalmanConfig {
  double process_noise = 0.05;     // white-acceleration density, mm^2 per mm^3 of travel
  double measurement_noise = 4.0;  // mm^2
  double gate_mm = 8.0;
};

struct FaultEvent {
  enum class Kind { LiftOff, LateralWander };
  Kind kind = Kind::LiftOff;
  double t_start_s = 0.0;
  double duration_s = 1.0;
  double magnitude_mm = 5.0;
};

std::string_view to_string(FaultEvent::Kind k);
FaultEvent::Kind fault_kind_from_string(std::string_view s);

struct ScanConfig {
  Mode mode = Mode::Robotic;
  double preset_force_n = 12.0;
  double scan_speed_mm_s = 4.0;
  double control_rate_hz = 30.0;
  PidGains pid;
  std::array<double, 3> k_pitch{40.0, 60.0, 120.0};  // sacrum, lumbar, thoracic; rad/(s N m)
  KalmanConfig kalman;
  double integrator_limit_ns = 20.0;
  double lateral_gain_per_s = 1.5;
  double lateral_rate_limit_mm_s = 5.0;
  double approach_standoff_mm = 5.0;
  double approach_speed_mm_s = 10.0;
  double contact_threshold_n = 0.5;
  int settle_ticks = 15;
  double z_margin_mm = 10.0;  // distance kept from the phantom's ends
  double max_duration_s = 600.0;

  // Scripted operator (manual mode).
  double manual_force_n = 8.0;
  double jitter_mm = 2.0;
  std::vector<FaultEvent> faults;

  detector::DetectorConfig detector;
  std::uint64_t seed = 0;

  double k_pitch_for(Region r) const { return k_pitch[static_cast<std::size_t>(r)]; }
};

void validate(const ScanConfig& cfg);

// Defaults for the comparison operator: faster sweep, lighter hand.
ScanConfig manual_defaults();

struct RobotState {
  bmode::ProbePose pose;
  double measured_force = 0.0;
  double measured_torque_x = 0.0;  // N m, reaction about the probe's lateral axis
  Phase phase = Phase::Approach;
  double pid_integrator = 0.0;     // N s
  double prev_error = 0.0;
  bool has_prev_error = false;
  bool safety_stop = false;
};

double force_step(RobotState& state, const ScanConfig& cfg, double dt);
double pitch_step(double m_x, Region region, const ScanConfig& cfg);

// Linear-spring contact of the probe face against the back.
struct ContactReading {
  double force_n = 0.0;
  double torque_x_nm = 0.0;
  double contact_fraction = 0.0;
  double max_penetration_mm = 0.0;
};

ContactReading probe_contact(const phantom::Sampler& sampler, const bmode::ProbePose& pose,
                             double probe_width_mm, double elevation_mm = 10.0);

// Constant-velocity lateral track indexed by scan height z. Velocity is the
// lateral drift per mm of travel, which at constant scan speed is the
// lateral velocity up to the speed factor.
struct SpineTrack {
  Eigen::Vector2d state = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
  double last_z = 0.0;
  bool initialized = false;
  std::vector<Eigen::Vector2d> history;  // (z, x) after each step

  static SpineTrack start(double z, double x, double var_x = 4.0, double var_v = 0.05);
};

// `measurement_x` is the detected lateral spine position in world x.
SpineTrack kalman_step(const SpineTrack& track, double z, std::optional<double> measurement_x,
                       const KalmanConfig& cfg);

bmode::ScanRecording run_scan(const phantom::SpinePhantom& phantom, const ScanConfig& scan,
                              const bmode::ImagingConfig& imaging,
                              const detector::DetectorNoise& noise = {});

}  // namespace spinescan::controller
