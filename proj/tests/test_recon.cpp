#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "spinescan/controller.hpp"
#include "spinescan/recon.hpp"
#include "spinescan/spa.hpp"

using namespace spinescan;

namespace {

const phantom::SpinePhantom& nominal_phantom() {
  static const auto ph = testing::curve_phantom(11.0, 20.0);
  return ph;
}

// Full-resolution robotic scan, cut to its first 300 frames to keep the test
// quick. Speckle only averages out at full resolution.
const bmode::ScanRecording& nominal_recording() {
  static const auto rec = [] {
    auto r = controller::run_scan(nominal_phantom(), controller::ScanConfig{}, bmode::ImagingConfig{});
    r.frames.resize(std::min<std::size_t>(r.frames.size(), 300));
    return r;
  }();
  return rec;
}

}  // namespace

TEST_CASE("single oblique frame fills one plane of voxels") {
  auto rec = testing::uniform_recording(1, 200);
  rec.frames[0].pose.pitch = 0.3;
  const auto vol = recon::compound(rec, 0.5);
  const Mat3 r = rec.frames[0].pose.rotation();
  const Vec3 normal = r.col(2);  // elevation axis, normal to the image plane
  std::size_t hits = 0;
  for (int iz = 0; iz < vol.dims[2]; ++iz)
    for (int iy = 0; iy < vol.dims[1]; ++iy)
      for (int ix = 0; ix < vol.dims[0]; ++ix) {
        const auto i = vol.index(ix, iy, iz);
        if (vol.hit_counts[i] == 0) continue;
        ++hits;
        const Vec3 p = vol.origin + vol.spacing * Vec3(ix, iy, iz);
        CHECK(std::abs((p - rec.frames[0].pose.position).dot(normal)) <= vol.spacing * std::sqrt(3.0) / 2.0);
      }
  CHECK(hits > 1000);
}

TEST_CASE("all-white frames compound to unit voxels") {
  const auto vol = recon::compound(testing::uniform_recording(40, 255), 0.5);
  std::size_t filled = 0;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (!vol.filled[i]) continue;
    ++filled;
    CHECK(vol.voxels[i] == 1.0f);
  }
  CHECK(filled > 0);
}

TEST_CASE("translating every pose shifts the volume origin only") {
  auto a = testing::uniform_recording(20, 120);
  // Give the frames some structure so equal volumes mean something.
  for (std::size_t k = 0; k < a.frames.size(); ++k)
    for (std::size_t i = 0; i < a.frames[k].pixels.size(); ++i)
      a.frames[k].pixels[i] = static_cast<std::uint8_t>((i * 7 + k * 13) % 251);
  auto b = a;
  for (auto& f : b.frames) f.pose.position.z() += 10.0;
  const auto va = recon::compound(a, 0.5), vb = recon::compound(b, 0.5);
  CHECK(va.dims == vb.dims);
  CHECK(va.voxels == vb.voxels);
  CHECK((vb.origin - va.origin - Vec3(0.0, 0.0, 10.0)).norm() < 1e-9);
}

TEST_CASE("uniform input projects to a uniform image on both paths") {
  const auto rec = testing::uniform_recording(60, 153);
  const auto skin = recon::SkinMap::from_recording(rec);
  const auto vol = recon::compound(rec, 0.5);
  const auto a = recon::vpi_volume(vol, skin, 4.0, 3.0);
  const auto b = recon::vpi_direct(rec, skin, 4.0, 3.0);
  CHECK(a.width == b.width);
  CHECK(a.height == b.height);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (a.mask[i]) {
      ++covered;
      CHECK(a.pixels[i] == doctest::Approx(0.6));
    }
    if (a.mask[i] && b.mask[i]) CHECK(a.pixels[i] == doctest::Approx(b.pixels[i]).epsilon(1e-6));
  }
  CHECK(covered > 0);
}

TEST_CASE("flat skin and axis-aligned frames reduce to a planar slab average") {
  auto rec = testing::uniform_recording(60, 0);
  for (std::size_t k = 0; k < rec.frames.size(); ++k)
    for (int r = 0; r < rec.frames[k].height; ++r)
      for (int c = 0; c < rec.frames[k].width; ++c)
        rec.frames[k].pixels[static_cast<std::size_t>(r) * rec.frames[k].width + c] =
            static_cast<std::uint8_t>((r * 3 + c * 5 + k * 11) % 256);
  const auto skin = recon::SkinMap::from_recording(rec);
  const auto vol = recon::compound(rec, 0.5);
  const double depth = 7.0, band = 3.0;
  const auto img = recon::vpi_volume(vol, skin, depth, band);

  // Rows of the volume inside the slab below the face plane y = 0.
  const int m = static_cast<int>(std::lround(band / vol.spacing));
  std::set<int> rows;
  for (int j = 0; j < m; ++j)
    rows.insert(static_cast<int>(std::floor((depth + (j + 0.5) * band / m - vol.origin.y()) / vol.spacing + 0.5)));
  int compared = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      if (!img.covered(c, r)) continue;
      const int ix = static_cast<int>(std::floor((img.x0 + c * img.spacing - vol.origin.x()) / vol.spacing + 0.5));
      const int iz = static_cast<int>(std::floor((img.z0 + r * img.spacing - vol.origin.z()) / vol.spacing + 0.5));
      double s = 0.0;
      int n = 0;
      for (int iy : rows) {
        const auto i = vol.index(ix, iy, iz);
        if (!vol.filled[i]) continue;
        s += vol.voxels[i];
        ++n;
      }
      REQUIRE(n > 0);
      CHECK(img.at(c, r) == doctest::Approx(s / n).epsilon(1e-5));
      ++compared;
    }
  CHECK(compared > 100);
}

TEST_CASE("slices below the spinous tips show a darker shadow path") {
  const auto& rec = nominal_recording();
  const auto skin = recon::SkinMap::from_recording(rec);
  const recon::SliceDepths sd;
  REQUIRE(sd.count == 9);
  std::vector<double> contrast, on_path;
  for (int k = 1; k <= sd.count; ++k) {
    const auto img = recon::vpi_direct(rec, skin, sd.depth(k), sd.band_mm);
    contrast.push_back(spa::ridge_contrast(img));
    double s = 0.0;
    int n = 0;
    for (int r = 0; r < img.height; ++r) {
      const double z = img.z0 + r * img.spacing;
      const int c = static_cast<int>(std::lround((nominal_phantom().centerline_world(z).x() - img.x0) / img.spacing));
      if (c < 0 || c >= img.width || !img.covered(c, r)) continue;
      s += img.at(c, r);
      ++n;
    }
    REQUIRE(n > 0);
    on_path.push_back(s / n);
  }
  // Tips sit 15 mm under the skin: slices 4 to 6 lie in the acoustic shadow.
  for (int k = 4; k <= 6; ++k) {
    CHECK(on_path[k - 1] < 0.5 * on_path[0]);
    CHECK(contrast[k - 1] > 5.0 * contrast[0]);
  }
}

TEST_CASE("direct projection tracks the volume path on a nominal recording") {
  const auto& rec = nominal_recording();
  const auto skin = recon::SkinMap::from_recording(rec);
  const auto vol = recon::compound(rec, 0.5);
  for (double depth : {4.0, 16.0, 28.0}) {
    const auto a = recon::vpi_volume(vol, skin, depth, 3.0);
    const auto b = recon::vpi_direct(rec, skin, depth, 3.0);
    REQUIRE(a.pixels.size() == b.pixels.size());
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
      if (a.mask[i] && b.mask[i]) {
        s += std::abs(a.pixels[i] - b.pixels[i]);
        ++n;
      }
    REQUIRE(n > 0);
    CHECK(s / n < 0.05);
    CHECK(a.provenance == recon::Provenance::Volume);
    CHECK(b.provenance == recon::Provenance::Direct);
  }
}

TEST_CASE("OpenMP and serial reconstruction are bit-identical") {
  const auto& rec = nominal_recording();
  const auto skin = recon::SkinMap::from_recording(rec);
  const auto va = recon::compound(rec, 0.5), vb = recon::serial::compound(rec, 0.5);
  CHECK(va.voxels == vb.voxels);
  CHECK(va.hit_counts == vb.hit_counts);
  CHECK(va.filled == vb.filled);
  const auto ia = recon::vpi_volume(va, skin, 13.0, 3.0), ib = recon::serial::vpi_volume(vb, skin, 13.0, 3.0);
  CHECK(ia.pixels == ib.pixels);
  CHECK(ia.mask == ib.mask);
  const auto da = recon::vpi_direct(rec, skin, 13.0, 3.0), db = recon::serial::vpi_direct(rec, skin, 13.0, 3.0);
  CHECK(da.pixels == db.pixels);
  CHECK(da.mask == db.mask);
}

TEST_CASE("slice depths and invalid requests") {
  const recon::SliceDepths sd;
  CHECK(sd.depth(1) == 4.0);
  CHECK(sd.depth(9) == 28.0);
  const auto rec = testing::uniform_recording(10, 100);
  const auto skin = recon::SkinMap::from_recording(rec);
  CHECK_THROWS_AS(recon::vpi_direct(rec, skin, 100.0, 3.0), Error);
  CHECK_THROWS_AS(recon::vpi_direct(rec, skin, 4.0, 0.0), Error);
}
