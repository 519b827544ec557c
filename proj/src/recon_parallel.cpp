#include <algorithm>

#include <omp.h>

#include "recon_kernel.hpp"

namespace spinescan::recon {

namespace {

// Contiguous slabs, a few per thread so uneven frame density balances out.
std::vector<std::pair<int, int>> slabs(int n) {
  const int parts = std::max(1, std::min(n, 4 * omp_get_max_threads()));
  std::vector<std::pair<int, int>> out;
  for (int p = 0; p < parts; ++p) out.emplace_back(n * p / parts, n * (p + 1) / parts);
  return out;
}

}  // namespace

Volume compound(const bmode::ScanRecording& rec, double spacing) {
  Volume vol;
  detail::init_volume(vol, rec, spacing);
  const auto zr = detail::frame_voxel_z_ranges(vol, rec);
  const auto parts = slabs(vol.dims[2]);
  const int np = static_cast<int>(parts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < np; ++p) {
    detail::splat_slab(vol, rec, zr, parts[p].first, parts[p].second);
    detail::normalize_slab(vol, parts[p].first, parts[p].second);
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < np; ++p) detail::fill_holes_slab(vol, parts[p].first, parts[p].second);
  return vol;
}

CoronalImage vpi_volume(const Volume& vol, const SkinMap& skin, double depth_mm, double band_mm) {
  detail::check_depth(nullptr, depth_mm, band_mm);
  CoronalImage img;
  detail::init_coronal(img, coronal_grid(skin, vol.spacing), depth_mm, band_mm, Provenance::Volume);
  const auto parts = slabs(img.height);
  const int np = static_cast<int>(parts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < np; ++p) detail::vpi_volume_rows(img, vol, skin, parts[p].first, parts[p].second);
  if (std::none_of(img.mask.begin(), img.mask.end(), [](auto m) { return m != 0; }))
    throw Error(ErrorCode::Degenerate, "no filled voxels in the requested band");
  return img;
}

CoronalImage vpi_direct(const bmode::ScanRecording& rec, const SkinMap& skin, double depth_mm,
                        double band_mm, double spacing) {
  detail::check_depth(&rec, depth_mm, band_mm);
  CoronalImage img;
  detail::init_coronal(img, coronal_grid(skin, spacing), depth_mm, band_mm, Provenance::Direct);
  detail::DirectAccumulator acc{std::vector<double>(img.pixels.size(), 0.0),
                                std::vector<std::uint32_t>(img.pixels.size(), 0)};
  const auto rr = detail::frame_coronal_row_ranges(img, rec);
  const auto parts = slabs(img.height);
  const int np = static_cast<int>(parts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < np; ++p) detail::direct_rows(acc, img, rec, rr, parts[p].first, parts[p].second);
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < np; ++p) detail::direct_finalize_rows(img, acc, parts[p].first, parts[p].second);
  if (std::none_of(img.mask.begin(), img.mask.end(), [](auto m) { return m != 0; }))
    throw Error(ErrorCode::Degenerate, "no frame pixels in the requested band");
  return img;
}

}  // namespace spinescan::recon
