#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "spinescan/bmode.hpp"
#include "spinescan/common.hpp"

namespace spinescan::recon {

// Voxel grid over world space. Index order is x fastest, then y, then z.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  double spacing = 0.5;
  Vec3 origin = Vec3::Zero();  // centre of voxel (0,0,0)
  std::vector<float> voxels;
  std::vector<std::uint16_t> hit_counts;
  std::vector<std::uint8_t> filled;  // hit or hole-filled

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * dims[1] + iy) * dims[0] + ix;
  }
  std::size_t size() const { return voxels.size(); }
};

enum class Provenance { Volume, Direct };
std::string_view to_string(Provenance p);

// Coronal projection over (z, x); row r is z = z0 + r*spacing, column c is
// x = x0 + c*spacing.
struct CoronalImage {
  int width = 0;
  int height = 0;
  double spacing = 0.5;
  double x0 = 0.0;
  double z0 = 0.0;
  double depth_mm = 0.0;
  double band_mm = 0.0;
  int slice_index = 0;
  Provenance provenance = Provenance::Volume;
  std::vector<float> pixels;
  std::vector<std::uint8_t> mask;  // 1 where the projection has data

  float at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool covered(int col, int row) const { return mask[static_cast<std::size_t>(row) * width + col] != 0; }
};

// Skin reference surface taken from the probe face line of each frame and
// interpolated linearly in z between neighbouring frames.
class SkinMap {
 public:
  struct Sample {
    Vec3 point;
    Vec3 inward;  // unit, into the body
  };

  static SkinMap from_recording(const bmode::ScanRecording& rec);

  std::optional<Sample> query(double z, double x) const;
  double z_min() const { return lines_.empty() ? 0.0 : lines_.front().face.z(); }
  double z_max() const { return lines_.empty() ? 0.0 : lines_.back().face.z(); }
  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }

 private:
  struct Line {
    Vec3 face;
    Vec3 lateral;
    Vec3 axial;
  };
  std::vector<Line> lines_;
  double half_width_ = 40.0;
  double x_min_ = 0.0, x_max_ = 0.0;
};

struct CoronalGrid {
  int width, height;
  double spacing, x0, z0;
};

CoronalGrid coronal_grid(const SkinMap& skin, double spacing);

struct SliceDepths {
  double first_mm = 4.0;
  double step_mm = 3.0;
  int count = 9;
  double band_mm = 3.0;

  double depth(int slice_index) const { return first_mm + (slice_index - 1) * step_mm; }
};

Volume compound(const bmode::ScanRecording& rec, double spacing = 0.5);
CoronalImage vpi_volume(const Volume& vol, const SkinMap& skin, double depth_mm, double band_mm);
CoronalImage vpi_direct(const bmode::ScanRecording& rec, const SkinMap& skin, double depth_mm,
                        double band_mm, double spacing = 0.5);

// Single-threaded references; bit-identical to the OpenMP versions above.
namespace serial {
Volume compound(const bmode::ScanRecording& rec, double spacing = 0.5);
CoronalImage vpi_volume(const Volume& vol, const SkinMap& skin, double depth_mm, double band_mm);
CoronalImage vpi_direct(const bmode::ScanRecording& rec, const SkinMap& skin, double depth_mm,
                        double band_mm, double spacing = 0.5);
}  // namespace serial

}  // namespace spinescan::recon
