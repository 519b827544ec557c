#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "helpers.hpp"
#include "spinescan/controller.hpp"

using namespace spinescan;
using controller::RobotState;
using controller::ScanConfig;

TEST_CASE("force PID sign and zero point") {
  ScanConfig cfg;
  RobotState st;
  st.measured_force = 12.0;
  CHECK(controller::force_step(st, cfg, 1.0 / 30.0) == 0.0);

  RobotState low;
  low.measured_force = 8.0;
  CHECK(controller::force_step(low, cfg, 1.0 / 30.0) > 0.0);  // push along the beam, into the skin

  RobotState high;
  high.measured_force = 16.0;
  CHECK(controller::force_step(high, cfg, 1.0 / 30.0) < 0.0);
}

TEST_CASE("force loop against a linear spring settles within 2 s") {
  ScanConfig cfg;
  const double k = 2.0;  // N/mm, the phantom's default back stiffness
  const double dt = 1.0 / cfg.control_rate_hz;
  RobotState st;
  double penetration = 0.0;
  for (int tick = 0; tick < static_cast<int>(2.0 / dt); ++tick) {
    st.measured_force = k * std::max(penetration, 0.0);
    penetration += controller::force_step(st, cfg, dt);
  }
  CHECK(std::abs(k * penetration - cfg.preset_force_n) <= 0.5);
}

TEST_CASE("NaN force triggers the safety stop") {
  ScanConfig cfg;
  RobotState st;
  st.measured_force = std::nan("");
  CHECK(controller::force_step(st, cfg, 0.1) == 0.0);
  CHECK(st.safety_stop);
  CHECK(st.phase == controller::Phase::Done);
}

TEST_CASE("pitch law") {
  ScanConfig cfg;
  CHECK(controller::pitch_step(0.0, Region::Thoracic, cfg) == 0.0);
  ScanConfig unit;
  unit.k_pitch = {0.02, 0.02, 0.02};
  CHECK(controller::pitch_step(0.5, Region::Lumbar, unit) == doctest::Approx(-0.01));
  for (double m : {-0.3, 0.2})
    CHECK(std::abs(controller::pitch_step(m, Region::Thoracic, cfg)) >=
          std::abs(controller::pitch_step(m, Region::Lumbar, cfg)));
}

TEST_CASE("Kalman predict-only step grows the covariance") {
  const controller::KalmanConfig kc;
  auto t = controller::SpineTrack::start(100.0, 3.0);
  t.state(1) = 0.1;
  const auto p = controller::kalman_step(t, 105.0, std::nullopt, kc);
  CHECK(p.state(0) == doctest::Approx(3.5));
  CHECK(p.state(1) == doctest::Approx(0.1));
  CHECK(p.covariance.trace() > t.covariance.trace());
  CHECK_THROWS_AS(controller::kalman_step(p, 105.0, 1.0, kc), Error);
}

TEST_CASE("Kalman converges on a fixed position without process noise") {
  controller::KalmanConfig kc;
  kc.process_noise = 0.0;
  kc.gate_mm = 1e9;
  auto t = controller::SpineTrack::start(0.0, 10.0);
  // Without process noise the filter is a least-squares line fit that still
  // carries the start prior, so the error decays rather than vanishing.
  double err_100 = 0.0;
  for (int i = 1; i <= 500; ++i) {
    t = controller::kalman_step(t, i * 0.5, 4.0, kc);
    if (i == 100) err_100 = std::abs(t.state(0) - 4.0);
  }
  CHECK(std::abs(t.state(0) - 4.0) < 0.05);
  CHECK(std::abs(t.state(0) - 4.0) < err_100);
  CHECK(std::abs(t.state(1)) < 1e-3);
}

TEST_CASE("Kalman fused path under 30% misses stays within 2 mm") {
  const controller::KalmanConfig kc;
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution miss(0.3);
    std::normal_distribution<double> noise(0.0, 2.0);
    auto truth = [](double z) { return 5.0 + 0.04 * z; };
    auto t = controller::SpineTrack::start(0.0, truth(0.0));
    double se = 0.0;
    int n = 0;
    for (int i = 1; i <= 1000; ++i) {
      const double z = 0.4 * i;
      std::optional<double> m;
      if (!miss(rng)) m = truth(z) + noise(rng);
      t = controller::kalman_step(t, z, m, kc);
      se += (t.state(0) - truth(z)) * (t.state(0) - truth(z));
      ++n;
    }
    CHECK(std::sqrt(se / n) < 2.0);
  }
}

TEST_CASE("robotic scan of a straight spine stays on the midline") {
  auto pc = testing::flat_phantom().config();
  const auto ph = phantom::build_phantom(pc);
  const auto rec = controller::run_scan(ph, ScanConfig{}, bmode::ImagingConfig{160, 120});
  const auto& log = rec.metadata.at("control_log");
  double worst = 0.0;
  for (std::size_t i = 0; i < log.at("x").size(); ++i)
    if (log.at("phase")[i] == "scanning") worst = std::max(worst, std::abs(log.at("x")[i].get<double>()));
  CHECK(worst < 1.0);
  CHECK_FALSE(rec.metadata.at("safety_stop").get<bool>());
  CHECK(rec.metadata.at("flags").empty());
}

TEST_CASE("scan duration and manual frame count") {
  phantom::PhantomConfig pc;
  pc.curves = {{11.0, 20.0, Side::Right, 0.0}};
  const ScanConfig robotic;
  pc.spine_length_mm = 400.0 + 2.0 * robotic.z_margin_mm;  // 400 mm of travel
  const auto ph = phantom::build_phantom(pc);
  const bmode::ImagingConfig img{160, 120};
  const auto r = controller::run_scan(ph, robotic, img);
  const double duration = r.frames.back().pose.timestamp - r.frames.front().pose.timestamp;
  CHECK(duration >= 95.0);
  CHECK(duration <= 120.0);

  auto manual = controller::manual_defaults();
  CHECK(manual.scan_speed_mm_s == doctest::Approx(2.0 * robotic.scan_speed_mm_s));
  const auto m = controller::run_scan(ph, manual, img);
  const double ratio = static_cast<double>(m.frames.size()) / r.frames.size();
  CHECK(ratio == doctest::Approx(0.5).epsilon(0.05));
  CHECK(m.metadata.at("mode") == "manual");
}

TEST_CASE("recorded frames keep strictly increasing timestamps") {
  const auto ph = testing::curve_phantom(4.5, 15.0);
  const auto rec = controller::run_scan(ph, ScanConfig{}, bmode::ImagingConfig{160, 120});
  for (std::size_t i = 1; i < rec.frames.size(); ++i)
    CHECK(rec.frames[i].pose.timestamp > rec.frames[i - 1].pose.timestamp);
}

TEST_CASE("scan configuration is validated") {
  ScanConfig cfg;
  cfg.scan_speed_mm_s = 0.0;
  CHECK_THROWS_AS(controller::validate(cfg), Error);
  cfg = {};
  cfg.preset_force_n = -1.0;
  CHECK_THROWS_AS(controller::validate(cfg), Error);
  CHECK_THROWS_AS(controller::mode_from_string("hover"), Error);
}
