#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "spinescan/phantom.hpp"

using namespace spinescan;
using phantom::build_phantom;
using phantom::CurveSpec;
using phantom::PhantomConfig;

namespace {

// Tangent-angle extremes straight from the centerline slope, independent of
// the library's extremum search.
double max_tilt_spread(const phantom::SpinePhantom& ph) {
  double lo = 0.0, hi = 0.0;
  for (double z = 0.0; z <= ph.config().spine_length_mm; z += 0.25) {
    const double a = std::atan(ph.slope_body(z)) * kRadToDeg;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  return hi - lo;
}

}  // namespace

TEST_CASE("straight spine has no curves and a zero centerline") {
  const auto ph = build_phantom(PhantomConfig{});
  CHECK(ph.ground_truth().empty());
  CHECK(phantom::ground_truth_spa(ph).empty());
  for (double z = 0.0; z <= ph.config().spine_length_mm; z += 10.0) CHECK(ph.centerline_body(z).first == 0.0);

  PhantomConfig zero;
  zero.curves = {{11.0, 0.0, Side::Right, 0.0}};
  CHECK(build_phantom(zero).ground_truth().empty());
}

TEST_CASE("single curve round-trips its target angle") {
  for (double target : {7.0, 20.0, 31.0}) {
    const auto ph = testing::curve_phantom(11.0, target);
    REQUIRE(ph.ground_truth().size() == 1);
    CHECK(std::abs(ph.ground_truth()[0].angle_deg - target) <= 0.5);
    CHECK(ph.ground_truth()[0].upper_level > ph.ground_truth()[0].lower_level);
  }
}

TEST_CASE("double curve of opposite directions gives both targets") {
  PhantomConfig pc;
  pc.curves = {{4.5, 12.0, Side::Left, 0.0}, {12.0, 20.0, Side::Right, 0.0}};
  const auto ph = build_phantom(pc);
  REQUIRE(ph.ground_truth().size() == 2);
  std::vector<double> got{ph.ground_truth()[0].angle_deg, ph.ground_truth()[1].angle_deg};
  std::sort(got.begin(), got.end());
  CHECK(std::abs(got[0] - 12.0) <= 0.5);
  CHECK(std::abs(got[1] - 20.0) <= 0.5);
}

TEST_CASE("ground truth is the tangent-angle difference at the bracketing extrema") {
  const auto ph = testing::curve_phantom(11.0, 20.0);
  const auto& c = ph.ground_truth().front();
  const double a_lo = std::atan(ph.slope_body(c.lower_z_mm)) * kRadToDeg;
  const double a_hi = std::atan(ph.slope_body(c.upper_z_mm)) * kRadToDeg;
  CHECK(std::abs(a_hi - a_lo) == doctest::Approx(c.angle_deg).epsilon(1e-6));
  CHECK(c.angle_deg <= max_tilt_spread(ph) + 1e-9);
}

TEST_CASE("build_phantom rejects invalid configurations") {
  PhantomConfig close;
  close.curves = {{10.0, 15.0, Side::Left, 0.0}, {11.5, 15.0, Side::Right, 0.0}};
  CHECK_THROWS_AS(build_phantom(close), Error);

  PhantomConfig steep;
  steep.curves = {{11.0, 46.0, Side::Right, 0.0}};
  CHECK_THROWS_AS(build_phantom(steep), Error);

  PhantomConfig three;
  three.curves = {{3.0, 10.0, Side::Right, 0.0}, {8.0, 10.0, Side::Left, 0.0}, {13.0, 10.0, Side::Right, 0.0}};
  CHECK_THROWS_AS(build_phantom(three), Error);

  PhantomConfig bad;
  bad.spine_length_mm = 0.0;
  CHECK_THROWS_AS(build_phantom(bad), Error);
  bad = {};
  bad.back_stiffness_n_per_mm = -1.0;
  CHECK_THROWS_AS(build_phantom(bad), Error);
}

TEST_CASE("surface normal of a flat back points out of the body") {
  const auto ph = testing::flat_phantom();
  for (double z : {50.0, 200.0, 400.0})
    for (double x : {-30.0, 0.0, 25.0}) {
      const auto s = phantom::surface_query(ph, z, x);
      CHECK(s.normal.norm() == doctest::Approx(1.0));
      CHECK(s.normal.y() == doctest::Approx(-1.0));
      CHECK(s.point.y() == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("coronal surface tilt rotates the normal about z") {
  PhantomConfig pc;
  pc.sagittal_amplitude_mm = 0.0;
  pc.coronal_surface_tilt_deg = 10.0;
  const auto s = phantom::surface_query(build_phantom(pc), 200.0, 10.0);
  CHECK(s.normal.z() == doctest::Approx(0.0).scale(1.0));
  const double tilt = std::acos(-s.normal.y()) * kRadToDeg;
  CHECK(tilt == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("surface query outside the phantom is an error") {
  const auto ph = testing::flat_phantom();
  try {
    phantom::surface_query(ph, ph.config().spine_length_mm + 5.0, 0.0);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfRange);
  }
}

TEST_CASE("skin lies outside the spinous tips by the soft-tissue thickness") {
  const auto ph = testing::curve_phantom(11.0, 20.0);
  for (const auto& tip : ph.spinous_tips()) {
    const auto s = phantom::surface_query(ph, tip.z(), tip.x());
    CHECK((tip - s.point).dot(-s.normal) >= ph.config().skin_offset_mm - 0.05);
  }
}

TEST_CASE("region boundaries partition the spine") {
  const auto ph = testing::curve_phantom(11.0, 20.0);
  const auto bands = ph.region_boundaries();
  REQUIRE(bands.size() == 3);
  CHECK(bands.front().region == Region::Sacrum);
  CHECK(bands.back().region == Region::Thoracic);
  for (std::size_t i = 1; i < bands.size(); ++i) CHECK(bands[i].z_begin_mm == bands[i - 1].z_end_mm);
  for (const auto& b : bands) CHECK(b.z_end_mm > b.z_begin_mm);
}

TEST_CASE("centerline is C1 continuous") {
  PhantomConfig pc;
  pc.curves = {{4.5, 15.0, Side::Left, 0.0}, {12.0, 25.0, Side::Right, 0.0}};
  const auto ph = build_phantom(pc);
  const double h = 1e-4;
  for (double z = 5.0; z < 445.0; z += 7.3) {
    const double fd = (ph.centerline_body(z + h).first - ph.centerline_body(z - h).first) / (2 * h);
    CHECK(fd == doctest::Approx(ph.slope_body(z)).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("mirroring curve directions negates x and keeps angles") {
  PhantomConfig a, b;
  a.curves = {{4.5, 12.0, Side::Left, 0.0}, {12.0, 22.0, Side::Right, 0.0}};
  b.curves = {{4.5, 12.0, Side::Right, 0.0}, {12.0, 22.0, Side::Left, 0.0}};
  const auto pa = build_phantom(a), pb = build_phantom(b);
  for (double z = 0.0; z <= 450.0; z += 5.0)
    CHECK(pa.centerline_body(z).first == doctest::Approx(-pb.centerline_body(z).first).scale(1.0));
  REQUIRE(pa.ground_truth().size() == pb.ground_truth().size());
  for (std::size_t i = 0; i < pa.ground_truth().size(); ++i)
    CHECK(pa.ground_truth()[i].angle_deg == doctest::Approx(pb.ground_truth()[i].angle_deg));
}

TEST_CASE("ground truth is invariant to translating the phantom") {
  const auto ph = testing::curve_phantom(11.0, 20.0);
  const auto moved = ph.with_posture({0.0, 12.0, -4.0, 7.0});
  const auto a = phantom::ground_truth_spa(ph), b = phantom::ground_truth_spa(moved);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].angle_deg == doctest::Approx(b[i].angle_deg));
  const Vec3 p0 = ph.centerline_world(200.0), p1 = moved.centerline_world(207.0);
  CHECK(p1.x() - p0.x() == doctest::Approx(12.0));
}

TEST_CASE("scaling spine length keeps the target after re-solving") {
  for (double s : {0.8, 1.5}) {
    PhantomConfig pc = testing::curve_phantom(11.0, 20.0).config();
    pc.spine_length_mm *= s;
    const auto ph = build_phantom(pc);
    REQUIRE(ph.ground_truth().size() == 1);
    CHECK(std::abs(ph.ground_truth()[0].angle_deg - 20.0) <= 0.5);
  }
}

TEST_CASE("torso compliance bends the spine in proportion to load") {
  PhantomConfig pc;
  pc.curves = {{4.5, 20.0, Side::Right, 0.0}};
  pc.torso_compliance_deg_per_n = 0.5;
  const auto ph = build_phantom(pc);
  CHECK(ph.bend_scale(0.0) == 0.0);
  CHECK(std::abs(ph.bend_scale(12.0)) > std::abs(ph.bend_scale(8.0)));
  pc.torso_compliance_deg_per_n = 0.0;
  CHECK(build_phantom(pc).bend_scale(12.0) == 0.0);
}
