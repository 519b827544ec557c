#include "spinescan/controller.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace spinescan::controller {

std::string_view to_string(Mode m) { return m == Mode::Robotic ? "robotic" : "manual"; }

Mode mode_from_string(std::string_view s) {
  if (s == "robotic") return Mode::Robotic;
  if (s == "manual") return Mode::Manual;
  throw Error(ErrorCode::InvalidArgument, "unknown scan mode: " + std::string(s));
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Approach: return "approach";
    case Phase::Contact: return "contact";
    case Phase::Scanning: return "scanning";
    case Phase::Done: return "done";
  }
  return "?";
}

std::string_view to_string(FaultEvent::Kind k) {
  return k == FaultEvent::Kind::LiftOff ? "lift_off" : "lateral_wander";
}

FaultEvent::Kind fault_kind_from_string(std::string_view s) {
  if (s == "lift_off") return FaultEvent::Kind::LiftOff;
  if (s == "lateral_wander") return FaultEvent::Kind::LateralWander;
  throw Error(ErrorCode::InvalidArgument, "unknown fault kind: " + std::string(s));
}

void validate(const ScanConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (!(cfg.preset_force_n >= 10.0 && cfg.preset_force_n <= 15.0))
    fail("preset_force must lie in [10, 15] N");
  if (!(cfg.control_rate_hz > 0.0)) fail("control_rate must be positive");
  if (!(cfg.scan_speed_mm_s > 0.0)) fail("scan_speed must be positive");
  if (cfg.k_pitch[2] < cfg.k_pitch[1]) fail("thoracic k_pitch must be >= lumbar k_pitch");
  for (double k : cfg.k_pitch)
    if (k < 0.0) fail("k_pitch must be non-negative");
  if (!(cfg.kalman.measurement_noise > 0.0) || cfg.kalman.process_noise < 0.0 || !(cfg.kalman.gate_mm > 0.0))
    fail("invalid kalman parameters");
  if (!(cfg.manual_force_n > 0.0)) fail("manual_force must be positive");
  if (cfg.jitter_mm < 0.0) fail("jitter must be non-negative");
  if (cfg.mode == Mode::Robotic && !cfg.faults.empty())
    fail("fault events apply to the scripted manual operator only");
  for (const auto& f : cfg.faults)
    if (!(f.duration_s > 0.0) || f.t_start_s < 0.0) fail("fault events need t_start >= 0 and duration > 0");
}

ScanConfig manual_defaults() {
  ScanConfig c;
  c.mode = Mode::Manual;
  c.scan_speed_mm_s = 8.0;
  return c;
}

double force_step(RobotState& state, const ScanConfig& cfg, double dt) {
  if (std::isnan(state.measured_force)) {
    state.phase = Phase::Done;
    state.safety_stop = true;
    return 0.0;
  }
  const double e = cfg.preset_force_n - state.measured_force;
  state.pid_integrator =
      std::clamp(state.pid_integrator + e * dt, -cfg.integrator_limit_ns, cfg.integrator_limit_ns);
  const double de = state.has_prev_error ? (e - state.prev_error) / dt : 0.0;
  state.prev_error = e;
  state.has_prev_error = true;
  return cfg.pid.kp * e + cfg.pid.ki * state.pid_integrator + cfg.pid.kd * de;
}

double pitch_step(double m_x, Region region, const ScanConfig& cfg) {
  return -cfg.k_pitch_for(region) * m_x;
}

namespace {

// Roll/pitch that point the beam along -normal (yaw fixed at zero).
void align_to_normal(bmode::ProbePose& pose, const Vec3& outward_normal) {
  const Vec3 a = -outward_normal.normalized();
  pose.pitch = std::asin(std::clamp(a.z(), -1.0, 1.0));
  pose.roll = std::atan2(-a.x(), a.y());
  pose.yaw = 0.0;
}

struct Segment {
  double z_begin, z_end;
  std::size_t first, last;
};

// Runs of frames whose face is not fully coupled.
std::vector<Segment> coupling_segments(const std::vector<bmode::BModeFrame>& frames) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].contact_fraction >= 1.0) continue;
    const double z = frames[i].pose.position.z();
    if (!out.empty() && out.back().last + 1 == i) {
      out.back().last = i;
      out.back().z_end = z;
    } else {
      out.push_back({z, z, i, i});
    }
  }
  return out;
}

nlohmann::json flags_json(const std::vector<Segment>& segs) {
  auto flags = nlohmann::json::array();
  for (const auto& s : segs)
    flags.push_back({{"type", "coupling_loss"},
                     {"z_begin_mm", s.z_begin},
                     {"z_end_mm", s.z_end},
                     {"first_frame", s.first},
                     {"last_frame", s.last}});
  return flags;
}

int frame_stride(const ScanConfig& scan, const bmode::ImagingConfig& imaging) {
  return std::max(1, static_cast<int>(std::lround(scan.control_rate_hz / imaging.frame_rate_hz)));
}

bmode::ScanRecording run_robotic(const phantom::SpinePhantom& ph, const ScanConfig& cfg,
                                 const bmode::ImagingConfig& imaging,
                                 const detector::DetectorNoise& noise) {
  const double dt = 1.0 / cfg.control_rate_hz;
  const int stride = frame_stride(cfg, imaging);
  const double z_start = ph.z_min() + cfg.z_margin_mm;
  const double z_end = ph.z_max() - cfg.z_margin_mm;
  const auto labels = ph.region_boundaries();

  RobotState st;
  {
    const double x0 = ph.centerline_world(z_start).x();
    const auto surf = phantom::surface_query(ph, z_start, x0);
    st.pose.position = surf.point + cfg.approach_standoff_mm * surf.normal;
    align_to_normal(st.pose, surf.normal);
  }

  bmode::ScanRecording rec;
  rec.imaging = imaging;
  SpineTrack track;
  Region region = ph.region_at(z_start);
  int settled = 0;
  std::uint64_t tick = 0;
  std::uint64_t frame_index = 0;

  nlohmann::json log_t = nlohmann::json::array(), log_phase = nlohmann::json::array(),
                 log_f = nlohmann::json::array(), log_mx = nlohmann::json::array(),
                 log_rx = nlohmann::json::array(), log_region = nlohmann::json::array(),
                 log_pitch = nlohmann::json::array(), log_x = nlohmann::json::array(),
                 log_z = nlohmann::json::array();
  auto detections = nlohmann::json::array();
  std::vector<double> truth_x;

  while (st.phase != Phase::Done) {
    const double t = tick * dt;
    if (t > cfg.max_duration_s) {
      rec.metadata["timeout"] = true;
      break;
    }
    const auto sampler = ph.sampler(st.measured_force);
    const auto contact = probe_contact(sampler, st.pose, imaging.probe_width_mm);
    st.measured_force = contact.force_n;
    st.measured_torque_x = contact.torque_x_nm;
    const Mat3 r = st.pose.rotation();
    const Vec3 lat = r.col(0), axial = r.col(1), elev = r.col(2);
    double rx = 0.0;

    switch (st.phase) {
      case Phase::Approach:
        if (st.measured_force > cfg.contact_threshold_n) {
          st.phase = Phase::Contact;
        } else {
          st.pose.position += cfg.approach_speed_mm_s * dt * axial;
        }
        break;
      case Phase::Contact: {
        const double u = force_step(st, cfg, dt);
        if (st.phase == Phase::Done) break;
        st.pose.position += u * axial;
        settled = std::abs(cfg.preset_force_n - st.measured_force) < 0.5 ? settled + 1 : 0;
        if (settled >= cfg.settle_ticks) {
          st.phase = Phase::Scanning;
          track = SpineTrack::start(st.pose.position.z(), st.pose.position.x());
        }
        break;
      }
      case Phase::Scanning: {
        if (tick % stride == 0) {
          st.pose.timestamp = t;
          bmode::RenderOptions opt{frame_index, st.measured_force};
          auto frame = bmode::render_frame(ph, st.pose, imaging, opt);
          const double z = st.pose.position.z();
          auto det = detector::detect(frame, imaging, cfg.detector);
          if (det) det = detector::apply_noise(*det, noise, frame_index, imaging.lateral_spacing());
          region = detector::classify_region(frame, z, labels, noise, frame_index);
          std::optional<double> meas;
          nlohmann::json dj = {{"frame_index", frame_index}, {"present", det.has_value()},
                               {"region", to_string(region)}};
          if (det) {
            det->region = region;
            meas = (st.pose.position + det->lateral_mm * lat).x();
            dj["lateral_px"] = det->lateral_px;
            dj["lateral_mm"] = det->lateral_mm;
            dj["confidence"] = det->confidence;
          }
          detections.push_back(std::move(dj));
          if (z > track.last_z) {
            track = kalman_step(track, z, meas, cfg.kalman);
            truth_x.push_back(ph.centerline_world(z, st.measured_force).x());
          }
          rec.frames.push_back(std::move(frame));
          ++frame_index;
        }
        const double u = force_step(st, cfg, dt);
        if (st.phase == Phase::Done) break;
        rx = pitch_step(st.measured_torque_x, region, cfg);
        st.pose.pitch += rx * dt;

        const double z = st.pose.position.z();
        const double target = track.state(0) + track.state(1) * (z - track.last_z);
        const double lim = cfg.lateral_rate_limit_mm_s * dt;
        const double dx = std::clamp(cfg.lateral_gain_per_s * (target - st.pose.position.x()) * dt, -lim, lim);
        st.pose.position += (dx / lat.x()) * lat;
        st.pose.position += cfg.scan_speed_mm_s * dt * elev;
        st.pose.position += u * axial;
        if (st.pose.position.z() >= z_end) st.phase = Phase::Done;
        break;
      }
      case Phase::Done:
        break;
    }
    if (std::isnan(contact.force_n)) {
      st.phase = Phase::Done;
      st.safety_stop = true;
    }

    log_t.push_back(t);
    log_phase.push_back(to_string(st.phase));
    log_f.push_back(contact.force_n);
    log_mx.push_back(contact.torque_x_nm);
    log_rx.push_back(rx);
    log_region.push_back(to_string(region));
    log_pitch.push_back(st.pose.pitch);
    log_x.push_back(st.pose.position.x());
    log_z.push_back(st.pose.position.z());
    ++tick;
  }

  if (rec.frames.empty())
    throw Error(ErrorCode::Degenerate, "robotic scan produced no frames (contact never settled)");

  auto& md = rec.metadata;
  md["mode"] = "robotic";
  md["safety_stop"] = st.safety_stop;
  md["flags"] = flags_json(coupling_segments(rec.frames));
  md["control_log"] = {{"t", log_t},     {"phase", log_phase}, {"force_n", log_f},
                       {"m_x", log_mx},  {"r_x", log_rx},      {"region", log_region},
                       {"pitch", log_pitch}, {"x", log_x},     {"z", log_z}};
  nlohmann::json tz = nlohmann::json::array(), tx = nlohmann::json::array();
  for (const auto& h : track.history) {
    tz.push_back(h(0));
    tx.push_back(h(1));
  }
  md["track"] = {{"z", tz}, {"x", tx}, {"truth_x", truth_x}};
  md["detections"] = std::move(detections);
  return rec;
}

bmode::ScanRecording run_manual(const phantom::SpinePhantom& ph, const ScanConfig& cfg,
                                const bmode::ImagingConfig& imaging) {
  const double z_start = ph.z_min() + cfg.z_margin_mm;
  const double z_end = ph.z_max() - cfg.z_margin_mm;
  const double k = ph.config().back_stiffness_n_per_mm;
  const double frame_dt = 1.0 / imaging.frame_rate_hz;

  // Hand tremor and drift: three slow sinusoids with seeded phases.
  constexpr std::array<double, 3> kJitterHz{0.05, 0.13, 0.29};
  std::array<double, 3> phase{};
  std::mt19937_64 rng(stream_seed(cfg.seed, 0x6a6974746572ULL));
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
  for (auto& p : phase) p = uni(rng);

  std::vector<bmode::ProbePose> poses;
  std::vector<double> loads;
  for (std::uint64_t i = 0;; ++i) {
    const double t = i * frame_dt;
    const double z = z_start + cfg.scan_speed_mm_s * t;
    if (z > z_end) break;
    double offset = 0.0;
    for (std::size_t j = 0; j < kJitterHz.size(); ++j)
      offset += cfg.jitter_mm / 3.0 * std::sin(2.0 * std::numbers::pi * kJitterHz[j] * t + phase[j]);
    double lift = 0.0;
    for (const auto& f : cfg.faults) {
      if (t < f.t_start_s || t > f.t_start_s + f.duration_s) continue;
      if (f.kind == FaultEvent::Kind::LiftOff) {
        lift = std::max(lift, f.magnitude_mm);
      } else {
        offset += f.magnitude_mm * std::sin(std::numbers::pi * (t - f.t_start_s) / f.duration_s);
      }
    }
    const double load = lift > 0.0 ? 0.0 : cfg.manual_force_n;
    const double x = ph.centerline_world(z, cfg.manual_force_n).x() + offset;
    const auto surf = phantom::surface_query(ph, z, x);
    const Vec3 b = ph.to_body(surf.point);
    const double press = cfg.manual_force_n / (k * ph.sampler().stiffness_scale(b.z(), b.x()));
    bmode::ProbePose pose;
    align_to_normal(pose, surf.normal);
    pose.position = surf.point + (lift - press) * surf.normal;
    pose.timestamp = t;
    poses.push_back(pose);
    loads.push_back(load);
  }
  if (poses.empty()) throw Error(ErrorCode::Degenerate, "manual scan range is empty");

  auto rec = bmode::record_scan(poses, ph, imaging, loads);
  auto& md = rec.metadata;
  md["mode"] = "manual";
  md["safety_stop"] = false;
  md["flags"] = flags_json(coupling_segments(rec.frames));
  auto events = nlohmann::json::array();
  for (const auto& f : cfg.faults)
    events.push_back({{"kind", to_string(f.kind)},
                      {"t_start_s", f.t_start_s},
                      {"duration_s", f.duration_s},
                      {"magnitude_mm", f.magnitude_mm}});
  md["fault_events"] = std::move(events);
  return rec;
}

}  // namespace

bmode::ScanRecording run_scan(const phantom::SpinePhantom& phantom, const ScanConfig& scan,
                              const bmode::ImagingConfig& imaging,
                              const detector::DetectorNoise& noise) {
  validate(scan);
  bmode::validate(imaging);
  detector::validate(noise);
  return scan.mode == Mode::Robotic ? run_robotic(phantom, scan, imaging, noise)
                                    : run_manual(phantom, scan, imaging);
}

}  // namespace spinescan::controller
