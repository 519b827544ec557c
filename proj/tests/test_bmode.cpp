#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/LU>

#include "helpers.hpp"
#include "spinescan/bmode.hpp"

using namespace spinescan;
using bmode::ImagingConfig;
using bmode::render_frame;

namespace {

constexpr double kLevelCentre = 212.5;  // centre of level 8, spinous process present

// Mean of each column over rows between the given depths.
std::vector<double> column_means(const bmode::BModeFrame& f, const ImagingConfig& cfg, double d0, double d1) {
  std::vector<double> m(f.width, 0.0);
  const int r0 = static_cast<int>(d0 / cfg.axial_spacing()), r1 = static_cast<int>(d1 / cfg.axial_spacing());
  for (int c = 0; c < f.width; ++c) {
    for (int r = r0; r < r1; ++r) m[c] += f.intensity(c, r);
    m[c] /= (r1 - r0);
  }
  return m;
}

// Centroid of the columns darker than half the frame's median column.
double shadow_centroid(const bmode::BModeFrame& f, const ImagingConfig& cfg) {
  auto m = column_means(f, cfg, 20.0, 55.0);
  auto sorted = m;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double thr = 0.5 * sorted[sorted.size() / 2];
  double s = 0.0, n = 0.0;
  for (int c = 0; c < f.width; ++c)
    if (m[c] < thr) {
      s += c;
      n += 1.0;
    }
  return n > 0 ? s / n : -1.0;
}

ImagingConfig clean() {
  ImagingConfig cfg;
  cfg.speckle_sigma = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("imaging defaults give 0.125 mm pixels") {
  const ImagingConfig cfg;
  CHECK(cfg.lateral_spacing() == 0.125);
  CHECK(cfg.axial_spacing() == 0.125);
}

TEST_CASE("probe centred on the spinous tip puts the shadow at column 320") {
  const auto ph = testing::flat_phantom();
  for (const auto& cfg : {clean(), ImagingConfig{}}) {
    const auto f = render_frame(ph, testing::flat_pose(0.0, kLevelCentre), cfg);
    CHECK(f.width == 640);
    CHECK(f.height == 480);
    CHECK(f.contact_fraction == 1.0);
    CHECK(std::abs(shadow_centroid(f, cfg) - 320.0) <= 1.0);
  }
}

TEST_CASE("lateral probe shift moves the shadow by shift / spacing") {
  const auto ph = testing::flat_phantom();
  const auto cfg = clean();
  const double c0 = shadow_centroid(render_frame(ph, testing::flat_pose(0.0, kLevelCentre), cfg), cfg);
  for (double dx : {-5.0, 2.0, 7.5}) {
    const double c1 = shadow_centroid(render_frame(ph, testing::flat_pose(dx, kLevelCentre), cfg), cfg);
    CHECK(std::abs((c0 - c1) - dx / cfg.lateral_spacing()) <= 1.0);
  }
}

TEST_CASE("lifted probe sees only the noise floor") {
  const auto ph = testing::flat_phantom();
  const ImagingConfig cfg;
  const auto f = render_frame(ph, testing::flat_pose(0.0, kLevelCentre, 5.0), cfg);
  CHECK(f.contact_fraction == 0.0);
  const auto peak = *std::max_element(f.pixels.begin(), f.pixels.end());
  CHECK(peak / 255.0 <= cfg.noise_floor);
}

TEST_CASE("rendering is deterministic and matches the serial reference") {
  const auto ph = testing::curve_phantom(11.0, 20.0);
  bmode::ProbePose pose;
  pose.position = ph.centerline_world(250.0);
  pose.position.y() = ph.sampler().skin_y(250.0, pose.position.x());
  pose.pitch = 0.05;
  const ImagingConfig cfg;
  const bmode::RenderOptions opt{7, 12.0};
  const auto a = render_frame(ph, pose, cfg, opt);
  const auto b = render_frame(ph, pose, cfg, opt);
  const auto c = bmode::serial::render_frame(ph, pose, cfg, opt);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels == c.pixels);
  CHECK(a.contact_fraction == c.contact_fraction);
}

TEST_CASE("without speckle a frame depends on geometry alone") {
  const auto ph = testing::flat_phantom();
  auto cfg = clean();
  const auto a = render_frame(ph, testing::flat_pose(1.0, 180.0), cfg, {3, 0.0});
  cfg.seed = 99;
  const auto b = render_frame(ph, testing::flat_pose(1.0, 180.0), cfg, {42, 0.0});
  CHECK(a.pixels == b.pixels);
}

TEST_CASE("shadow column is darker than the neighbouring echo by half the shadow contrast") {
  const auto ph = testing::flat_phantom();
  const ImagingConfig cfg;
  const auto f = render_frame(ph, testing::flat_pose(0.0, kLevelCentre), cfg);
  const auto m = column_means(f, cfg, 30.0, 55.0);
  auto band = [&](double x0, double x1) {
    double s = 0.0;
    int n = 0;
    for (int c = 0; c < f.width; ++c) {
      const double x = (c - cfg.center_px()) * cfg.lateral_spacing();
      if (x >= x0 && x <= x1) {
        s += m[c];
        ++n;
      }
    }
    return s / n;
  };
  const double shadow = band(-2.0, 2.0);
  const double echo = 0.5 * (band(-38.0, -26.0) + band(26.0, 38.0));
  CHECK(echo - shadow >= cfg.shadow_contrast / 2.0 * echo);
}

TEST_CASE("record_scan makes one frame per pose") {
  const auto ph = testing::flat_phantom();
  ImagingConfig cfg;
  cfg.width_px = 32;
  cfg.height_px = 24;
  std::vector<bmode::ProbePose> poses{testing::flat_pose(0.0, 200.0)};
  CHECK(bmode::record_scan(poses, ph, cfg).frames.size() == 1);

  // A 120 s sweep at 10 frames per second.
  poses.clear();
  for (int i = 0; i < 1200; ++i) {
    auto p = testing::flat_pose(0.0, 20.0 + 0.35 * i);
    p.timestamp = i / cfg.frame_rate_hz;
    poses.push_back(p);
  }
  const auto rec = bmode::record_scan(poses, ph, cfg);
  CHECK(rec.frames.size() == 1200);
  CHECK(rec.imaging.width_px == 32);
}

TEST_CASE("record_scan rejects empty and unordered pose lists") {
  const auto ph = testing::flat_phantom();
  ImagingConfig cfg;
  cfg.width_px = 32;
  cfg.height_px = 24;
  CHECK_THROWS_AS(bmode::record_scan(std::vector<bmode::ProbePose>{}, ph, cfg), Error);
  auto a = testing::flat_pose(0.0, 200.0), b = testing::flat_pose(0.0, 201.0);
  a.timestamp = 1.0;
  b.timestamp = 0.5;
  CHECK_THROWS_AS(bmode::record_scan(std::vector<bmode::ProbePose>{a, b}, ph, cfg), Error);
}

TEST_CASE("pose normalization wraps angles") {
  bmode::ProbePose p;
  p.roll = 3.0 * std::numbers::pi;
  p.pitch = -2.5 * std::numbers::pi;
  p.normalize();
  CHECK(p.roll == doctest::Approx(std::numbers::pi));
  CHECK(p.pitch == doctest::Approx(-0.5 * std::numbers::pi));
  CHECK(p.rotation().determinant() == doctest::Approx(1.0));
}
