#include "spinescan/recon.hpp"

#include <algorithm>
#include <limits>

#include "recon_kernel.hpp"

namespace spinescan::recon {

std::string_view to_string(Provenance p) { return p == Provenance::Volume ? "volume" : "direct"; }

SkinMap SkinMap::from_recording(const bmode::ScanRecording& rec) {
  if (rec.frames.empty()) throw Error(ErrorCode::InvalidArgument, "skin map needs a non-empty recording");
  SkinMap m;
  m.half_width_ = 0.5 * rec.imaging.probe_width_mm;
  std::vector<Line> lines;
  lines.reserve(rec.frames.size());
  for (const auto& f : rec.frames) {
    const Mat3 r = f.pose.rotation();
    lines.push_back({f.pose.position, r.col(0), r.col(1)});
  }
  std::stable_sort(lines.begin(), lines.end(),
                   [](const Line& a, const Line& b) { return a.face.z() < b.face.z(); });
  m.x_min_ = std::numeric_limits<double>::infinity();
  m.x_max_ = -m.x_min_;
  for (const auto& l : lines) {
    if (!l.face.allFinite()) throw Error(ErrorCode::Degenerate, "non-finite probe pose");
    if (!m.lines_.empty() && !(l.face.z() > m.lines_.back().face.z())) continue;
    m.lines_.push_back(l);
    const double reach = m.half_width_ * std::abs(l.lateral.x());
    m.x_min_ = std::min(m.x_min_, l.face.x() - reach);
    m.x_max_ = std::max(m.x_max_, l.face.x() + reach);
  }
  return m;
}

std::optional<SkinMap::Sample> SkinMap::query(double z, double x) const {
  if (lines_.empty() || z < lines_.front().face.z() || z > lines_.back().face.z()) return std::nullopt;
  auto it = std::upper_bound(lines_.begin(), lines_.end(), z,
                             [](double v, const Line& l) { return v < l.face.z(); });
  const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - lines_.begin()), lines_.size() - 1);
  const std::size_t lo = hi == 0 ? 0 : hi - 1;
  const Line& a = lines_[lo];
  const Line& b = lines_[hi];
  auto on_line = [&](const Line& l) -> std::optional<Vec3> {
    if (std::abs(l.lateral.x()) < 1e-6) return std::nullopt;
    const double u = (x - l.face.x()) / l.lateral.x();
    if (std::abs(u) > half_width_) return std::nullopt;
    return l.face + u * l.lateral;
  };
  const auto pa = on_line(a);
  const auto pb = on_line(b);
  if (!pa || !pb) return std::nullopt;
  const double dz = b.face.z() - a.face.z();
  const double w = dz > 0.0 ? (z - a.face.z()) / dz : 0.0;
  Sample s;
  s.point = (1.0 - w) * *pa + w * *pb;
  s.inward = ((1.0 - w) * a.axial + w * b.axial).normalized();
  return s;
}

CoronalGrid coronal_grid(const SkinMap& skin, double spacing) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::InvalidArgument, "spacing must be positive");
  CoronalGrid g;
  g.spacing = spacing;
  g.z0 = std::ceil(skin.z_min() / spacing) * spacing;
  g.x0 = std::ceil(skin.x_min() / spacing) * spacing;
  g.height = std::max(0, static_cast<int>(std::floor((skin.z_max() - g.z0) / spacing)) + 1);
  g.width = std::max(0, static_cast<int>(std::floor((skin.x_max() - g.x0) / spacing)) + 1);
  return g;
}

namespace detail {

FrameAxes frame_axes(const bmode::BModeFrame& f, const bmode::ImagingConfig& cfg) {
  const Mat3 r = f.pose.rotation();
  return {f.pose.position, cfg.lateral_spacing() * r.col(0), cfg.axial_spacing() * r.col(1),
          cfg.center_px()};
}

void init_volume(Volume& vol, const bmode::ScanRecording& rec, double spacing) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::InvalidArgument, "spacing must be positive");
  if (rec.frames.empty()) throw Error(ErrorCode::InvalidArgument, "compound needs a non-empty recording");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  const auto& cfg = rec.imaging;
  for (const auto& f : rec.frames) {
    const auto ax = frame_axes(f, cfg);
    if (!ax.face.allFinite() || !ax.dl.allFinite() || !ax.da.allFinite())
      throw Error(ErrorCode::Degenerate, "non-finite probe pose");
    for (double c : {0.0, cfg.width_px - 1.0})
      for (double r : {0.0, cfg.height_px - 1.0}) {
        const Vec3 p = ax.face + (c - ax.center_px) * ax.dl + r * ax.da;
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
  }
  if (!((hi - lo).maxCoeff() > 0.0)) throw Error(ErrorCode::Degenerate, "recording has zero spatial extent");
  vol.spacing = spacing;
  for (int a = 0; a < 3; ++a) {
    vol.origin(a) = std::floor(lo(a) / spacing) * spacing;
    vol.dims[a] = nearest((hi(a) - vol.origin(a)) / spacing) + 1;
  }
  const double n = static_cast<double>(vol.dims[0]) * vol.dims[1] * vol.dims[2];
  if (n > 2.0e9) throw Error(ErrorCode::Degenerate, "volume too large for the requested spacing");
  const auto count = static_cast<std::size_t>(n);
  vol.voxels.assign(count, 0.0f);
  vol.hit_counts.assign(count, 0);
  vol.filled.assign(count, 0);
}

std::vector<std::pair<int, int>> frame_voxel_z_ranges(const Volume& vol, const bmode::ScanRecording& rec) {
  std::vector<std::pair<int, int>> out;
  out.reserve(rec.frames.size());
  const auto& cfg = rec.imaging;
  for (const auto& f : rec.frames) {
    const auto ax = frame_axes(f, cfg);
    double zl = std::numeric_limits<double>::infinity(), zh = -zl;
    for (double c : {0.0, cfg.width_px - 1.0})
      for (double r : {0.0, cfg.height_px - 1.0}) {
        const double z = (ax.face + (c - ax.center_px) * ax.dl + r * ax.da).z();
        zl = std::min(zl, z);
        zh = std::max(zh, z);
      }
    out.emplace_back(nearest((zl - vol.origin.z()) / vol.spacing) - 1,
                     nearest((zh - vol.origin.z()) / vol.spacing) + 1);
  }
  return out;
}

void splat_slab(Volume& vol, const bmode::ScanRecording& rec, const std::vector<std::pair<int, int>>& zr,
                int lo, int hi) {
  const auto& cfg = rec.imaging;
  const double inv = 1.0 / vol.spacing;
  const int nx = vol.dims[0], ny = vol.dims[1];
  for (std::size_t fi = 0; fi < rec.frames.size(); ++fi) {
    if (zr[fi].second < lo || zr[fi].first >= hi) continue;
    const auto& f = rec.frames[fi];
    const auto ax = frame_axes(f, cfg);
    const Vec3 base = (ax.face - ax.center_px * ax.dl - vol.origin) * inv;
    const Vec3 dl = ax.dl * inv;
    const Vec3 da = ax.da * inv;
    for (int r = 0; r < cfg.height_px; ++r) {
      const Vec3 row0 = base + r * da;
      const std::uint8_t* px = f.pixels.data() + static_cast<std::size_t>(r) * cfg.width_px;
      for (int c = 0; c < cfg.width_px; ++c) {
        const Vec3 p = row0 + c * dl;
        const int iz = nearest(p.z());
        if (iz < lo || iz >= hi) continue;
        const int ix = nearest(p.x());
        const int iy = nearest(p.y());
        if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) continue;
        const std::size_t i = vol.index(ix, iy, iz);
        if (vol.hit_counts[i] == 0xFFFF) continue;
        vol.voxels[i] += px[c];  // integer-valued sums stay exact in float
        ++vol.hit_counts[i];
      }
    }
  }
}

void normalize_slab(Volume& vol, int lo, int hi) {
  const std::size_t plane = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1];
  for (std::size_t i = lo * plane; i < hi * plane; ++i) {
    if (vol.hit_counts[i] == 0) continue;
    vol.voxels[i] = static_cast<float>(vol.voxels[i] / (255.0 * vol.hit_counts[i]));
    vol.filled[i] = 1;
  }
}

void fill_holes_slab(Volume& vol, int lo, int hi) {
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  for (int iz = lo; iz < hi; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const std::size_t i = vol.index(ix, iy, iz);
        if (vol.hit_counts[i] != 0) continue;
        double sum = 0.0;
        int n = 0;
        for (int dz = -1; dz <= 1; ++dz) {
          const int z = iz + dz;
          if (z < 0 || z >= nz) continue;
          for (int dy = -1; dy <= 1; ++dy) {
            const int y = iy + dy;
            if (y < 0 || y >= ny) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int x = ix + dx;
              if (x < 0 || x >= nx) continue;
              const std::size_t j = vol.index(x, y, z);
              if (vol.hit_counts[j] == 0) continue;
              sum += vol.voxels[j];
              ++n;
            }
          }
        }
        if (n > 0) {
          vol.voxels[i] = static_cast<float>(sum / n);
          vol.filled[i] = 1;
        }
      }
}

void init_coronal(CoronalImage& img, const CoronalGrid& g, double depth, double band, Provenance p) {
  img.width = g.width;
  img.height = g.height;
  img.spacing = g.spacing;
  img.x0 = g.x0;
  img.z0 = g.z0;
  img.depth_mm = depth;
  img.band_mm = band;
  img.provenance = p;
  const auto n = static_cast<std::size_t>(g.width) * g.height;
  img.pixels.assign(n, 0.0f);
  img.mask.assign(n, 0);
}

void vpi_volume_rows(CoronalImage& img, const Volume& vol, const SkinMap& skin, int lo, int hi) {
  const int m = std::max(1, nearest(img.band_mm / vol.spacing));
  const double inv = 1.0 / vol.spacing;
  for (int row = lo; row < hi; ++row) {
    const double z = img.z0 + row * img.spacing;
    for (int col = 0; col < img.width; ++col) {
      const auto s = skin.query(z, img.x0 + col * img.spacing);
      if (!s) continue;
      double sum = 0.0;
      int n = 0;
      for (int j = 0; j < m; ++j) {
        const double d = img.depth_mm + (j + 0.5) * img.band_mm / m;
        const Vec3 q = (s->point + d * s->inward - vol.origin) * inv;
        const int ix = nearest(q.x()), iy = nearest(q.y()), iz = nearest(q.z());
        if (ix < 0 || iy < 0 || iz < 0 || ix >= vol.dims[0] || iy >= vol.dims[1] || iz >= vol.dims[2]) continue;
        const std::size_t i = vol.index(ix, iy, iz);
        if (!vol.filled[i]) continue;
        sum += vol.voxels[i];
        ++n;
      }
      if (n == 0) continue;
      const std::size_t k = static_cast<std::size_t>(row) * img.width + col;
      img.pixels[k] = static_cast<float>(sum / n);
      img.mask[k] = 1;
    }
  }
}

std::vector<std::pair<int, int>> frame_coronal_row_ranges(const CoronalImage& img,
                                                          const bmode::ScanRecording& rec) {
  std::vector<std::pair<int, int>> out;
  out.reserve(rec.frames.size());
  const double hw = 0.5 * rec.imaging.probe_width_mm;
  for (const auto& f : rec.frames) {
    const Mat3 r = f.pose.rotation();
    const double z0 = (f.pose.position - hw * r.col(0)).z();
    const double z1 = (f.pose.position + hw * r.col(0)).z();
    out.emplace_back(nearest((std::min(z0, z1) - img.z0) / img.spacing) - 1,
                     nearest((std::max(z0, z1) - img.z0) / img.spacing) + 1);
  }
  return out;
}

void direct_rows(DirectAccumulator& acc, const CoronalImage& img, const bmode::ScanRecording& rec,
                 const std::vector<std::pair<int, int>>& rr, int lo, int hi) {
  const auto& cfg = rec.imaging;
  const double sy = cfg.axial_spacing();
  const int r0 = std::clamp(static_cast<int>(std::ceil(img.depth_mm / sy - 1e-9)), 0, cfg.height_px);
  const int r1 = std::clamp(static_cast<int>(std::ceil((img.depth_mm + img.band_mm) / sy - 1e-9)), r0,
                            cfg.height_px);
  if (r1 == r0) return;
  const double inv = 1.0 / img.spacing;
  for (std::size_t fi = 0; fi < rec.frames.size(); ++fi) {
    if (rr[fi].second < lo || rr[fi].first >= hi) continue;
    const auto& f = rec.frames[fi];
    const auto ax = frame_axes(f, cfg);
    for (int c = 0; c < cfg.width_px; ++c) {
      const Vec3 q = ax.face + (c - ax.center_px) * ax.dl;
      const int row = nearest((q.z() - img.z0) * inv);
      if (row < lo || row >= hi) continue;
      const int col = nearest((q.x() - img.x0) * inv);
      if (col < 0 || col >= img.width) continue;
      std::uint32_t s = 0;
      for (int r = r0; r < r1; ++r) s += f.pixels[static_cast<std::size_t>(r) * cfg.width_px + c];
      const std::size_t k = static_cast<std::size_t>(row) * img.width + col;
      acc.sum[k] += s * (1.0 / 255.0);
      acc.count[k] += static_cast<std::uint32_t>(r1 - r0);
    }
  }
}

void direct_finalize_rows(CoronalImage& img, const DirectAccumulator& acc, int lo, int hi) {
  const int w = img.width, h = img.height;
  for (int row = lo; row < hi; ++row)
    for (int col = 0; col < w; ++col) {
      const std::size_t k = static_cast<std::size_t>(row) * w + col;
      if (acc.count[k] > 0) {
        img.pixels[k] = static_cast<float>(acc.sum[k] / acc.count[k]);
        img.mask[k] = 1;
        continue;
      }
      double sum = 0.0;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int r = row + dr, c = col + dc;
          if (r < 0 || c < 0 || r >= h || c >= w) continue;
          const std::size_t j = static_cast<std::size_t>(r) * w + c;
          if (acc.count[j] == 0) continue;
          sum += acc.sum[j] / acc.count[j];
          ++n;
        }
      if (n > 0) {
        img.pixels[k] = static_cast<float>(sum / n);
        img.mask[k] = 1;
      }
    }
}

void check_depth(const bmode::ScanRecording* rec, double depth, double band) {
  if (depth < 0.0 || !(band > 0.0)) throw Error(ErrorCode::InvalidArgument, "depth must be >= 0 and band > 0");
  if (rec && depth + band > rec->imaging.depth_mm)
    throw Error(ErrorCode::OutOfRange, "slice band extends past the imaging depth");
}

}  // namespace detail

}  // namespace spinescan::recon
