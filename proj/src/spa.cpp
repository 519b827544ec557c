#include "spinescan/spa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spinescan/detector.hpp"

namespace spinescan::spa {

namespace {

constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

std::vector<double> gaussian_kernel(double sigma_samples) {
  const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_samples)));
  std::vector<double> k(2 * half + 1);
  double s = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * (i / sigma_samples) * (i / sigma_samples));
    k[i + half] = v;
    s += v;
  }
  for (auto& v : k) v /= s;
  return k;
}

// Mask-aware separable Gaussian blur; uncovered pixels stay uncovered.
std::vector<double> presmooth(const recon::CoronalImage& img, double sigma_px) {
  const int w = img.width, h = img.height;
  std::vector<double> src(img.pixels.begin(), img.pixels.end());
  if (sigma_px <= 0.0) return src;
  const auto k = gaussian_kernel(sigma_px);
  const int half = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (!img.mask[i]) continue;
      double s = 0.0, ws = 0.0;
      for (int j = -half; j <= half; ++j) {
        const int cc = c + j;
        if (cc < 0 || cc >= w || !img.mask[i + j]) continue;
        s += k[j + half] * src[i + j];
        ws += k[j + half];
      }
      tmp[i] = s / ws;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (!img.mask[i]) continue;
      double s = 0.0, ws = 0.0;
      for (int j = -half; j <= half; ++j) {
        const int rr = r + j;
        if (rr < 0 || rr >= h) continue;
        const std::size_t q = static_cast<std::size_t>(rr) * w + c;
        if (!img.mask[q]) continue;
        s += k[j + half] * tmp[q];
        ws += k[j + half];
      }
      out[i] = s / ws;
    }
  return out;
}

// Valley contrast for every pixel; NaN where the stencil leaves coverage.
std::vector<double> valley_scores(const recon::CoronalImage& img, const ExtractConfig& cfg) {
  const int w = img.width, h = img.height;
  const auto sm = presmooth(img, cfg.presmooth_sigma_mm / img.spacing);
  const int inner = std::max(1, static_cast<int>(std::lround(cfg.flank_inner_mm / img.spacing)));
  const int outer = std::max(inner + 1, static_cast<int>(std::lround(cfg.flank_outer_mm / img.spacing)));
  const int ch = std::max(0, static_cast<int>(std::lround(cfg.centre_half_mm / img.spacing)));
  std::vector<double> score(sm.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> ps(w + 1);
  std::vector<int> pm(w + 1);
  for (int r = 0; r < h; ++r) {
    const std::size_t row = static_cast<std::size_t>(r) * w;
    for (int c = 0; c < w; ++c) {
      ps[c + 1] = ps[c] + sm[row + c];
      pm[c + 1] = pm[c] + (img.mask[row + c] ? 1 : 0);
    }
    auto mean = [&](int a, int b) { return (ps[b + 1] - ps[a]) / (b - a + 1); };
    for (int c = outer; c + outer < w; ++c) {
      if (pm[c + outer + 1] - pm[c - outer] != 2 * outer + 1) continue;
      const double left = mean(c - outer, c - inner);
      const double right = mean(c + inner, c + outer);
      const double flank = std::min(left, right);
      if (!(flank > 0.0)) continue;
      score[row + c] = (flank - mean(c - ch, c + ch)) / flank;
    }
  }
  return score;
}

struct RowBest {
  int col = -1;
  double score = -std::numeric_limits<double>::infinity();
};

std::vector<RowBest> row_best(const std::vector<double>& score, int w, int h) {
  std::vector<RowBest> out(h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double s = score[static_cast<std::size_t>(r) * w + c];
      if (!std::isnan(s) && s > out[r].score) out[r] = {c, s};
    }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

// Odd reflection about each end keeps the end slopes of the signal.
std::vector<double> smooth_odd(const std::vector<double>& x, double sigma_samples) {
  const int n = static_cast<int>(x.size());
  const auto k = gaussian_kernel(sigma_samples);
  const int half = static_cast<int>(k.size() / 2);
  auto at = [&](int i) {
    if (i < 0) return 2.0 * x[0] - x[std::min(n - 1, -i)];
    if (i >= n) return 2.0 * x[n - 1] - x[std::max(0, 2 * (n - 1) - i)];
    return x[i];
  };
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = -half; j <= half; ++j) s += k[j + half] * at(i + j);
    out[i] = s;
  }
  return out;
}

}  // namespace

SpinousPath extract_path(const recon::CoronalImage& img, const ExtractConfig& cfg) {
  const int w = img.width, h = img.height;
  if (w <= 0 || h <= 0) throw Error(ErrorCode::ExtractionFailed, "empty coronal image");
  const auto score = valley_scores(img, cfg);
  const auto best = row_best(score, w, h);

  std::vector<double> bests;
  int imaged_rows = 0;
  for (int r = 0; r < h; ++r) {
    const auto* m = img.mask.data() + static_cast<std::size_t>(r) * w;
    if (std::any_of(m, m + w, [](auto v) { return v != 0; })) ++imaged_rows;
    if (best[r].col >= 0) bests.push_back(best[r].score);
  }
  const double thr = std::max(cfg.min_contrast, cfg.relative_threshold * median_of(bests));
  int seed = -1;
  for (int r = 0; r < h; ++r)
    if (best[r].col >= 0 && best[r].score >= thr && (seed < 0 || best[r].score > best[seed].score)) seed = r;
  if (seed < 0) throw Error(ErrorCode::ExtractionFailed, "no traceable ridge in coronal image");

  auto at = [&](int r, int c) { return score[static_cast<std::size_t>(r) * w + c]; };
  auto subpixel = [&](int r, int c) {
    if (c <= 0 || c >= w - 1) return static_cast<double>(c);
    const double a = at(r, c - 1), b = at(r, c), d = at(r, c + 1);
    if (std::isnan(a) || std::isnan(d)) return static_cast<double>(c);
    const double den = a - 2.0 * b + d;
    if (!(den < 0.0)) return static_cast<double>(c);
    return c + std::clamp(0.5 * (a - d) / den, -0.5, 0.5);
  };

  // rows -> traced sub-pixel column (NaN where absent)
  std::vector<double> col(h, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> interp(h, 0);
  col[seed] = subpixel(seed, best[seed].col);
  int long_gaps = 0;
  for (int dir : {+1, -1}) {
    int last_row = seed;
    int gap = 0;
    for (int r = seed + dir; r >= 0 && r < h; r += dir) {
      const int reach = cfg.max_step_px * (gap + 1);
      const int centre = static_cast<int>(std::lround(col[last_row]));
      int bc = -1;
      double bs = thr;
      for (int c = std::max(0, centre - reach); c <= std::min(w - 1, centre + reach); ++c) {
        const double s = at(r, c);
        if (!std::isnan(s) && s >= bs) {
          if (bc < 0 || s > bs) {
            bc = c;
            bs = s;
          }
        }
      }
      if (bc < 0) {
        ++gap;
        continue;
      }
      col[r] = subpixel(r, bc);
      if (gap > 0) {
        if (gap <= cfg.max_gap_rows) {
          for (int q = last_row + dir; q != r; q += dir) {
            const double t = static_cast<double>(q - last_row) / (r - last_row);
            col[q] = col[last_row] + t * (col[r] - col[last_row]);
            interp[q] = 1;
          }
        } else {
          ++long_gaps;
        }
      }
      last_row = r;
      gap = 0;
    }
  }

  SpinousPath path;
  for (int r = 0; r < h; ++r)
    if (!std::isnan(col[r])) path.points.push_back({img.z0 + r * img.spacing, img.x0 + col[r] * img.spacing, interp[r] != 0});
  path.long_gaps = long_gaps;
  path.coverage = imaged_rows > 0 ? static_cast<double>(path.points.size()) / imaged_rows : 0.0;
  if (long_gaps > 0) path.flags.push_back("long_gap");
  if (path.coverage < cfg.min_coverage) path.flags.push_back("low_coverage");

  if (path.points.size() >= 3) {
    std::vector<double> xs;
    for (const auto& p : path.points) xs.push_back(p.x);
    const auto sm = smooth_odd(xs, 20.0 * kFwhmToSigma / img.spacing);
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) ss += (xs[i] - sm[i]) * (xs[i] - sm[i]);
    path.smoothness_mm = std::sqrt(ss / xs.size());
  }
  return path;
}

double ridge_contrast(const recon::CoronalImage& img, const ExtractConfig& cfg) {
  const auto score = valley_scores(img, cfg);
  const auto best = row_best(score, img.width, img.height);
  std::vector<double> v;
  for (const auto& b : best)
    if (b.col >= 0) v.push_back(b.score);
  return median_of(std::move(v));
}

double TangentProfile::angle_at(double z) const {
  if (angle_deg.empty()) return 0.0;
  const double f = std::clamp((z - z0) / dz, 0.0, static_cast<double>(angle_deg.size() - 1));
  const auto i = std::min(static_cast<std::size_t>(f), angle_deg.size() - 2 + (angle_deg.size() == 1));
  if (angle_deg.size() == 1) return angle_deg[0];
  const double t = f - static_cast<double>(i);
  return angle_deg[i] + t * (angle_deg[i + 1] - angle_deg[i]);
}

TangentProfile tangent_profile(const SpinousPath& path, const MeasureConfig& cfg) {
  if (path.points.size() < 2 || path.z_extent() < cfg.min_length_mm)
    throw Error(ErrorCode::InvalidArgument, "path too short for angle measurement");
  for (std::size_t i = 1; i < path.points.size(); ++i)
    if (!(path.points[i].z > path.points[i - 1].z))
      throw Error(ErrorCode::InvalidArgument, "path z must be strictly increasing");

  TangentProfile tp;
  tp.dz = cfg.resample_mm;
  tp.z0 = path.points.front().z;
  const int n = static_cast<int>(std::floor(path.z_extent() / tp.dz)) + 1;
  std::vector<double> x(n);
  std::size_t j = 0;
  for (int i = 0; i < n; ++i) {
    const double z = tp.z0 + i * tp.dz;
    while (j + 2 < path.points.size() && path.points[j + 1].z < z) ++j;
    const auto& a = path.points[j];
    const auto& b = path.points[j + 1];
    const double t = std::clamp((z - a.z) / (b.z - a.z), 0.0, 1.0);
    x[i] = a.x + t * (b.x - a.x);
  }
  tp.x = smooth_odd(x, cfg.kernel_fwhm_mm * kFwhmToSigma / tp.dz);
  tp.angle_deg.resize(n);
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - 1), b = std::min(n - 1, i + 1);
    tp.angle_deg[i] = std::atan((tp.x[b] - tp.x[a]) / ((b - a) * tp.dz)) * kRadToDeg;
  }
  return tp;
}

std::vector<phantom::CurveAngle> measure_spa(const SpinousPath& path, const MeasureConfig& cfg) {
  const auto tp = tangent_profile(path, cfg);
  const auto& th = tp.angle_deg;
  const int n = static_cast<int>(th.size());

  // Pivots: strict local extrema of the tangent angle (plateaus count once).
  std::vector<int> piv;
  for (int i = 1; i + 1 < n; ++i) {
    const double d0 = th[i] - th[i - 1];
    if (d0 == 0.0) continue;
    int k = i;
    while (k + 1 < n && th[k + 1] == th[k]) ++k;
    if (k + 1 >= n) break;
    const double d1 = th[k + 1] - th[k];
    if (d0 * d1 < 0.0) piv.push_back(i);
  }

  // Collapse swings below the hysteresis threshold, smallest first. A small
  // swing at either end of the list only drops the outer pivot; inside the
  // list both pivots of the swing go so the rest keep alternating.
  while (piv.size() >= 2) {
    std::size_t k_min = 0;
    double s_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < piv.size(); ++k) {
      const double s = std::abs(th[piv[k]] - th[piv[k + 1]]);
      if (s < s_min) {
        s_min = s;
        k_min = k;
      }
    }
    if (s_min >= cfg.pivot_threshold_deg) break;
    const auto it = piv.begin() + static_cast<std::ptrdiff_t>(k_min);
    if (k_min == 0) {
      piv.erase(it);
    } else if (k_min + 2 == piv.size()) {
      piv.erase(it + 1);
    } else {
      piv.erase(it, it + 2);
    }
  }

  const int margin = static_cast<int>(std::lround(cfg.end_margin_mm / tp.dz));
  std::vector<int> inner;
  for (int p : piv)
    if (p >= margin && p <= n - 1 - margin) inner.push_back(p);

  std::vector<phantom::CurveAngle> out;
  for (std::size_t k = 0; k + 1 < inner.size(); ++k) {
    const double tl = th[inner[k]], tu = th[inner[k + 1]];
    const double angle = std::abs(tu - tl);
    if (angle < cfg.pivot_threshold_deg) continue;
    phantom::CurveAngle c;
    c.angle_deg = angle;
    c.lower_z_mm = tp.z0 + inner[k] * tp.dz;
    c.upper_z_mm = tp.z0 + inner[k + 1] * tp.dz;
    c.lower_level = c.lower_z_mm / cfg.level_pitch_mm - 0.5;
    c.upper_level = c.upper_z_mm / cfg.level_pitch_mm - 0.5;
    c.direction = tl > tu ? Side::Right : Side::Left;
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.angle_deg > b.angle_deg; });
  if (static_cast<int>(out.size()) > cfg.max_curves) out.resize(cfg.max_curves);
  return out;
}

void validate(const RaterModel& r) {
  if (r.angle_sigma_deg < 0.0 || r.level_jitter < 0.0)
    throw Error(ErrorCode::InvalidArgument, "rater sigmas must be non-negative");
}

std::vector<double> rate(const std::vector<phantom::CurveAngle>& angles, const RaterModel& rater,
                         std::uint64_t scan_id, const SpinousPath* path, const MeasureConfig& cfg) {
  validate(rater);
  std::optional<TangentProfile> tp;
  if (path && rater.level_jitter > 0.0) tp = tangent_profile(*path, cfg);
  std::vector<double> out;
  out.reserve(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    double a = angles[i].angle_deg;
    if (tp) {
      const double step = rater.level_jitter * cfg.level_pitch_mm;
      const double zl = angles[i].lower_z_mm + step * detector::hashed_normal(stream_seed(rater.seed, scan_id, i), 1);
      const double zu = angles[i].upper_z_mm + step * detector::hashed_normal(stream_seed(rater.seed, scan_id, i), 2);
      a = std::abs(tp->angle_at(zu) - tp->angle_at(zl));
    }
    a += rater.bias_deg;
    if (rater.angle_sigma_deg > 0.0)
      a += rater.angle_sigma_deg * detector::hashed_normal(stream_seed(rater.seed, scan_id, i), 0);
    out.push_back(std::max(0.0, a));
  }
  return out;
}

}  // namespace spinescan::spa
