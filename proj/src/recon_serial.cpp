#include <algorithm>

#include "recon_kernel.hpp"

namespace spinescan::recon::serial {

Volume compound(const bmode::ScanRecording& rec, double spacing) {
  Volume vol;
  detail::init_volume(vol, rec, spacing);
  const auto zr = detail::frame_voxel_z_ranges(vol, rec);
  detail::splat_slab(vol, rec, zr, 0, vol.dims[2]);
  detail::normalize_slab(vol, 0, vol.dims[2]);
  detail::fill_holes_slab(vol, 0, vol.dims[2]);
  return vol;
}

CoronalImage vpi_volume(const Volume& vol, const SkinMap& skin, double depth_mm, double band_mm) {
  detail::check_depth(nullptr, depth_mm, band_mm);
  CoronalImage img;
  detail::init_coronal(img, coronal_grid(skin, vol.spacing), depth_mm, band_mm, Provenance::Volume);
  detail::vpi_volume_rows(img, vol, skin, 0, img.height);
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
  detail::direct_rows(acc, img, rec, rr, 0, img.height);
  detail::direct_finalize_rows(img, acc, 0, img.height);
  if (std::none_of(img.mask.begin(), img.mask.end(), [](auto m) { return m != 0; }))
    throw Error(ErrorCode::Degenerate, "no frame pixels in the requested band");
  return img;
}

}  // namespace spinescan::recon::serial
