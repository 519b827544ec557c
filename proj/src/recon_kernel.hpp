#pragma once

// Slab kernels shared by the OpenMP and serial reconstruction paths. Every
// kernel writes only to outputs whose slow index (volume z or coronal row)
// lies in [lo, hi), and visits frames and pixels in recording order, so
// splitting the range across threads reproduces the serial bytes exactly.

#include <cmath>
#include <cstdint>
#include <vector>

#include "spinescan/recon.hpp"

namespace spinescan::recon::detail {

struct FrameAxes {
  Vec3 face, dl, da;  // face centre, per-column and per-row world steps
  double center_px;
};

FrameAxes frame_axes(const bmode::BModeFrame& f, const bmode::ImagingConfig& cfg);

// Allocates `vol` (dims, origin, zeroed buffers) from the recording's extent.
void init_volume(Volume& vol, const bmode::ScanRecording& rec, double spacing);

// Inclusive voxel-z range touched by each frame.
std::vector<std::pair<int, int>> frame_voxel_z_ranges(const Volume& vol, const bmode::ScanRecording& rec);

inline int nearest(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Accumulates pixel sums and hit counts for voxels with iz in [lo, hi).
void splat_slab(Volume& vol, const bmode::ScanRecording& rec,
                const std::vector<std::pair<int, int>>& zr, int lo, int hi);
// Converts sums to means, then fills empty voxels from their 26 neighbours.
void normalize_slab(Volume& vol, int lo, int hi);
void fill_holes_slab(Volume& vol, int lo, int hi);

void init_coronal(CoronalImage& img, const CoronalGrid& g, double depth, double band, Provenance p);

void vpi_volume_rows(CoronalImage& img, const Volume& vol, const SkinMap& skin, int lo, int hi);

struct DirectAccumulator {
  std::vector<double> sum;
  std::vector<std::uint32_t> count;
};

// Coronal-row range touched by each frame's face line.
std::vector<std::pair<int, int>> frame_coronal_row_ranges(const CoronalImage& img,
                                                          const bmode::ScanRecording& rec);
void direct_rows(DirectAccumulator& acc, const CoronalImage& img, const bmode::ScanRecording& rec,
                 const std::vector<std::pair<int, int>>& rr, int lo, int hi);
void direct_finalize_rows(CoronalImage& img, const DirectAccumulator& acc, int lo, int hi);

void check_depth(const bmode::ScanRecording* rec, double depth, double band);

}  // namespace spinescan::recon::detail
