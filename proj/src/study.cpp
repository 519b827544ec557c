#include "spinescan/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>

#include <omp.h>

#include "spinescan/common.hpp"

namespace spinescan::study {
namespace {

using nlohmann::json;

constexpr std::uint64_t kCohortStream = 0xc0407;
constexpr std::uint64_t kScanStream = 0x5ca9;
constexpr std::uint64_t kPostureStream = 0x9057;
constexpr std::uint64_t kRaterStream = 0x4a7e;

[[noreturn]] void invalid(const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); }

double round_to(double v, double step) { return std::round(v / step) * step; }

// Deterministic draws for one cohort attempt.
class Draws {
 public:
  Draws(std::uint64_t seed, std::uint64_t attempt) : base_(stream_seed(seed, kCohortStream, attempt)) {}
  double uniform() { return unit_uniform(stream_seed(base_, next_++)); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return detector::hashed_normal(base_, next_++); }

 private:
  std::uint64_t base_;
  std::uint64_t next_ = 0;
};

double truncated_normal(Draws& d, double mean, double sd, double lo, double hi) {
  if (sd <= 0.0) return std::clamp(mean, lo, hi);
  for (int i = 0; i < 1000; ++i) {
    const double v = mean + sd * d.normal();
    if (v >= lo && v <= hi) return v;
  }
  return d.uniform(lo, hi);
}

std::string subject_name(int i, int n) {
  const int width = std::max(2, static_cast<int>(std::to_string(n).size()));
  std::string num = std::to_string(i + 1);
  return "S" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(width, num.size()), '0') + num;
}

int method_index(controller::Mode m) { return m == controller::Mode::Robotic ? 0 : 1; }

std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (const auto& x : v) {
    if (!s.empty()) s += sep;
    s += x;
  }
  return s;
}

// Ground truth in world coordinates under the scan's posture.
std::vector<phantom::CurveAngle> world_truth(const phantom::SpinePhantom& ph) {
  auto gt = ph.ground_truth();
  for (auto& c : gt) {
    auto to_w = [&ph](double zb) {
      const auto [x, y] = ph.centerline_body(zb);
      return ph.to_world(Vec3(x, y, zb)).z();
    };
    c.lower_z_mm = to_w(c.lower_z_mm);
    c.upper_z_mm = to_w(c.upper_z_mm);
  }
  return gt;
}

}  // namespace

void validate(const CohortConfig& c) {
  if (c.n_subjects < 1) invalid("cohort needs at least one subject");
  if (c.n_single < 0 || c.n_single > c.n_subjects) invalid("n_single must lie in [0, n_subjects]");
  if (!(c.angle_min_deg > 0.0) || c.angle_max_deg > 45.0 || c.angle_min_deg > c.angle_max_deg)
    invalid("angle range must satisfy 0 < min <= max <= 45");
  if (c.angle_sd_deg < 0.0 || c.mean_tolerance_deg < 0.0) invalid("angle sd and tolerance must be non-negative");
  if (c.max_attempts < 1) invalid("max_attempts must be positive");
  if (c.angle_mean_deg + c.mean_tolerance_deg < c.angle_min_deg ||
      c.angle_mean_deg - c.mean_tolerance_deg > c.angle_max_deg)
    throw Error(ErrorCode::InfeasibleConfig, "target mean angle cannot be reached inside the angle range");
  phantom::validate(c.anatomy);
}

std::vector<Subject> generate_cohort(const CohortConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const int n = cfg.n_subjects;
  const int n_curves = cfg.n_single + 2 * (n - cfg.n_single);
  std::string last_failure = "target mean not met";
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Draws d(seed, static_cast<std::uint64_t>(attempt));
    std::vector<double> angles(static_cast<std::size_t>(n_curves));
    double sum = 0.0;
    for (auto& a : angles) {
      a = round_to(truncated_normal(d, cfg.angle_mean_deg, cfg.angle_sd_deg, cfg.angle_min_deg, cfg.angle_max_deg), 0.1);
      a = std::clamp(a, cfg.angle_min_deg, cfg.angle_max_deg);
      sum += a;
    }
    if (std::abs(sum / n_curves - cfg.angle_mean_deg) > cfg.mean_tolerance_deg) continue;

    // Which subjects carry a single curve: Fisher-Yates on the draw stream.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = std::min(i, static_cast<int>(d.uniform() * (i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<bool> single(static_cast<std::size_t>(n), false);
    for (int i = 0; i < cfg.n_single; ++i) single[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    std::vector<Subject> out;
    std::size_t next_angle = 0;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      phantom::PhantomConfig pc = cfg.anatomy;
      pc.seed = stream_seed(seed, kCohortStream, static_cast<std::uint64_t>(i));
      pc.curves.clear();
      const bool thoracic_major = d.uniform() < 0.5;
      const Side thoracic_dir = d.uniform() < 0.5 ? Side::Right : Side::Left;
      const Side lumbar_dir = thoracic_dir == Side::Right ? Side::Left : Side::Right;
      if (single[static_cast<std::size_t>(i)]) {
        const double a = angles[next_angle++];
        if (thoracic_major)
          pc.curves.push_back({round_to(d.uniform(8.5, 12.5), 0.1), a, thoracic_dir, 0.0});
        else
          pc.curves.push_back({round_to(d.uniform(3.5, 5.5), 0.1), a, lumbar_dir, 0.0});
      } else {
        double a1 = angles[next_angle++], a2 = angles[next_angle++];
        if (a1 < a2) std::swap(a1, a2);
        const double lumbar_apex = round_to(d.uniform(4.0, 5.5), 0.1);
        const double thoracic_apex = round_to(d.uniform(10.0, 12.5), 0.1);
        pc.curves.push_back({lumbar_apex, thoracic_major ? a2 : a1, lumbar_dir, 0.0});
        pc.curves.push_back({thoracic_apex, thoracic_major ? a1 : a2, thoracic_dir, 0.0});
      }
      try {
        out.push_back({subject_name(i, n), phantom::build_phantom(pc)});
      } catch (const Error& e) {
        last_failure = e.what();
        ok = false;
      }
    }
    if (ok) return out;
  }
  throw Error(ErrorCode::InfeasibleConfig, "cohort constraints not met after " + std::to_string(cfg.max_attempts) +
                                               " attempts (" + last_failure + ")");
}

StudyConfig StudyConfig::noiseless() {
  StudyConfig c;
  for (auto& r : c.raters) r.model.angle_sigma_deg = 0.0;
  c.detector_noise = {};
  c.posture = {0.0, 0.0};
  c.manual.jitter_mm = 0.0;
  c.independent_repeats = false;
  return c;
}

void validate(const StudyConfig& c) {
  validate(c.cohort);
  if (c.cohort.n_subjects < 2) invalid("a study needs at least two subjects");
  if (c.scans_per_method < 2) invalid("scans_per_method must be at least 2");
  if (c.raters.empty()) invalid("a study needs at least one rater");
  std::set<std::string> names;
  for (const auto& r : c.raters) {
    if (r.name.empty() || r.name == "auto" || r.name.find_first_of(",\n") != std::string::npos)
      invalid("rater names must be non-empty, not 'auto' and free of commas");
    if (!names.insert(r.name).second) invalid("duplicate rater name '" + r.name + "'");
    spa::validate(r.model);
  }
  detector::validate(c.detector_noise);
  bmode::validate(c.imaging);
  if (c.robotic.mode != controller::Mode::Robotic) invalid("robotic scan config must use robotic mode");
  if (c.manual.mode != controller::Mode::Manual) invalid("manual scan config must use manual mode");
  controller::validate(c.robotic);
  controller::validate(c.manual);
  if (c.posture.tilt_deg < 0.0 || c.posture.shift_mm < 0.0) invalid("posture jitter must be non-negative");
  if (c.depths.count < 1 || !(c.depths.band_mm > 0.0)) invalid("need at least one slice with a positive band");
  if (!(c.recon_spacing_mm > 0.0)) invalid("recon spacing must be positive");
  if (!(c.match_tolerance_mm > 0.0)) invalid("match tolerance must be positive");
}

json to_json(const StudyConfig& c) {
  json raters = json::array();
  for (const auto& r : c.raters) raters.push_back({{"name", r.name}, {"model", r.model}});
  return {{"cohort",
           {{"n_subjects", c.cohort.n_subjects},
            {"n_single", c.cohort.n_single},
            {"angle_min_deg", c.cohort.angle_min_deg},
            {"angle_max_deg", c.cohort.angle_max_deg},
            {"angle_mean_deg", c.cohort.angle_mean_deg},
            {"angle_sd_deg", c.cohort.angle_sd_deg},
            {"mean_tolerance_deg", c.cohort.mean_tolerance_deg},
            {"max_attempts", c.cohort.max_attempts},
            {"anatomy", c.cohort.anatomy}}},
          {"scans_per_method", c.scans_per_method},
          {"raters", raters},
          {"detector_noise", c.detector_noise},
          {"robotic", c.robotic},
          {"manual", c.manual},
          {"imaging", c.imaging},
          {"posture", {{"tilt_deg", c.posture.tilt_deg}, {"shift_mm", c.posture.shift_mm}}},
          {"independent_repeats", c.independent_repeats},
          {"depths", c.depths},
          {"recon_method", recon::to_string(c.recon_method)},
          {"recon_spacing_mm", c.recon_spacing_mm},
          {"extract", c.extract},
          {"measure", c.measure},
          {"match_tolerance_mm", c.match_tolerance_mm},
          {"master_seed", c.master_seed},
          {"keep_images", c.keep_images}};
}

StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  auto get = [](const json& o, const char* k, auto& field) {
    if (auto it = o.find(k); it != o.end() && !it->is_null()) field = it->get<std::remove_reference_t<decltype(field)>>();
  };
  if (j.contains("cohort")) {
    const auto& h = j.at("cohort");
    get(h, "n_subjects", c.cohort.n_subjects);
    get(h, "n_single", c.cohort.n_single);
    get(h, "angle_min_deg", c.cohort.angle_min_deg);
    get(h, "angle_max_deg", c.cohort.angle_max_deg);
    get(h, "angle_mean_deg", c.cohort.angle_mean_deg);
    get(h, "angle_sd_deg", c.cohort.angle_sd_deg);
    get(h, "mean_tolerance_deg", c.cohort.mean_tolerance_deg);
    get(h, "max_attempts", c.cohort.max_attempts);
    get(h, "anatomy", c.cohort.anatomy);
  }
  get(j, "scans_per_method", c.scans_per_method);
  if (j.contains("raters")) {
    c.raters.clear();
    for (const auto& r : j.at("raters")) {
      NamedRater nr;
      nr.name = r.at("name").get<std::string>();
      if (r.contains("model")) nr.model = r.at("model").get<spa::RaterModel>();
      c.raters.push_back(std::move(nr));
    }
  }
  get(j, "detector_noise", c.detector_noise);
  if (j.contains("robotic")) {
    c.robotic = controller::ScanConfig{};
    c.robotic = j.at("robotic").get<controller::ScanConfig>();
  }
  if (j.contains("manual")) {
    controller::ScanConfig m = controller::manual_defaults();
    controller::from_json(j.at("manual"), m);
    c.manual = m;
  }
  get(j, "imaging", c.imaging);
  if (j.contains("posture")) {
    get(j.at("posture"), "tilt_deg", c.posture.tilt_deg);
    get(j.at("posture"), "shift_mm", c.posture.shift_mm);
  }
  get(j, "independent_repeats", c.independent_repeats);
  get(j, "depths", c.depths);
  if (j.contains("recon_method")) {
    const auto m = j.at("recon_method").get<std::string>();
    if (m == "direct") c.recon_method = recon::Provenance::Direct;
    else if (m == "volume") c.recon_method = recon::Provenance::Volume;
    else invalid("recon_method must be 'direct' or 'volume'");
  }
  get(j, "recon_spacing_mm", c.recon_spacing_mm);
  get(j, "extract", c.extract);
  get(j, "measure", c.measure);
  get(j, "match_tolerance_mm", c.match_tolerance_mm);
  get(j, "master_seed", c.master_seed);
  get(j, "keep_images", c.keep_images);
  return c;
}

std::vector<std::optional<std::size_t>> match_curves(const std::vector<phantom::CurveAngle>& truth,
                                                     const std::vector<phantom::CurveAngle>& measured,
                                                     double tolerance_mm) {
  struct Pair {
    double d;
    std::size_t t, m;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t)
    for (std::size_t m = 0; m < measured.size(); ++m) {
      const double d = std::abs(truth[t].apex_z_mm() - measured[m].apex_z_mm());
      if (d <= tolerance_mm) pairs.push_back({d, t, m});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<std::optional<std::size_t>> out(truth.size());
  std::vector<bool> used(measured.size(), false);
  for (const auto& p : pairs) {
    if (out[p.t] || used[p.m]) continue;
    out[p.t] = p.m;
    used[p.m] = true;
  }
  return out;
}

namespace {

phantom::Posture draw_posture(const PostureJitter& j, std::uint64_t seed) {
  auto u = [seed](std::uint64_t k) { return 2.0 * unit_uniform(stream_seed(seed, kPostureStream, k)) - 1.0; };
  phantom::Posture p;
  p.coronal_tilt_deg = j.tilt_deg * u(0);
  p.shift_x_mm = j.shift_mm * u(1);
  p.shift_y_mm = j.shift_mm * u(2);
  p.shift_z_mm = j.shift_mm * u(3);
  return p;
}

struct ScanWork {
  ScanOutcome outcome;
  std::optional<spa::SpinousPath> path;
};

ScanWork scan_with_path(const phantom::SpinePhantom& base, const StudyConfig& cfg, controller::Mode mode,
                        std::uint64_t seed) {
  ScanWork w;
  auto& o = w.outcome;
  o.method = std::string(controller::to_string(mode));
  o.seed = seed;
  o.posture = draw_posture(cfg.posture, seed);
  const auto ph = base.with_posture(o.posture);

  controller::ScanConfig sc = mode == controller::Mode::Robotic ? cfg.robotic : cfg.manual;
  sc.seed = seed;
  bmode::ImagingConfig imaging = cfg.imaging;
  imaging.seed = seed;
  detector::DetectorNoise noise = cfg.detector_noise;
  noise.seed = seed;

  const auto truth = world_truth(ph);
  o.match.assign(truth.size(), std::nullopt);

  bmode::ScanRecording rec;
  try {
    rec = controller::run_scan(ph, sc, imaging, noise);
  } catch (const Error&) {
    o.flags.emplace_back("scan_failed");
    return w;
  }
  o.recording_hash = io::recording_hash(rec);
  o.coupling_loss_segments = static_cast<int>(rec.metadata.value("flags", json::array()).size());
  if (o.coupling_loss_segments > 0) o.flags.emplace_back("coupling_loss");
  if (rec.metadata.value("safety_stop", false)) o.flags.emplace_back("safety_stop");

  const auto skin = recon::SkinMap::from_recording(rec);
  std::optional<recon::Volume> vol;
  if (cfg.recon_method == recon::Provenance::Volume) vol = recon::compound(rec, cfg.recon_spacing_mm);
  std::optional<recon::CoronalImage> best;
  for (int k = 1; k <= cfg.depths.count; ++k) {
    try {
      auto img = vol ? recon::vpi_volume(*vol, skin, cfg.depths.depth(k), cfg.depths.band_mm)
                     : recon::vpi_direct(rec, skin, cfg.depths.depth(k), cfg.depths.band_mm, cfg.recon_spacing_mm);
      img.slice_index = k;
      const double rc = spa::ridge_contrast(img, cfg.extract);
      if (!best || rc > o.ridge_contrast) {
        o.ridge_contrast = rc;
        best = std::move(img);
      }
    } catch (const Error&) {
      // Depth beyond the image or nothing covered: not a candidate slice.
    }
  }
  if (!best) {
    o.flags.emplace_back("no_slice");
    return w;
  }
  o.best_slice = best->slice_index;
  if (cfg.keep_images) {
    io::Gray8 g;
    g.width = best->width;
    g.height = best->height;
    g.pixels.resize(best->pixels.size());
    for (std::size_t i = 0; i < g.pixels.size(); ++i)
      if (best->mask[i])
        g.pixels[i] = static_cast<std::uint8_t>(
            1 + std::lround(std::clamp(static_cast<double>(best->pixels[i]), 0.0, 1.0) * 254.0));
    o.image = std::move(g);
    o.image_sidecar = io::coronal_sidecar(*best, o.recording_hash);
  }

  try {
    w.path = spa::extract_path(*best, cfg.extract);
    for (const auto& f : w.path->flags) o.flags.push_back(f);
    o.measured = spa::measure_spa(*w.path, cfg.measure);
  } catch (const Error&) {
    o.flags.emplace_back(w.path ? "measure_failed" : "extraction_failed");
    return w;
  }
  o.match = match_curves(truth, o.measured, cfg.match_tolerance_mm);
  return w;
}

std::uint64_t scan_seed(const StudyConfig& cfg, std::size_t subject, controller::Mode mode, int scan_idx) {
  return stream_seed(cfg.master_seed, kScanStream, subject, method_index(mode),
                     cfg.independent_repeats ? static_cast<std::uint64_t>(scan_idx) : 0ULL);
}

struct SubjectResult {
  std::vector<ScanOutcome> scans;
  std::vector<io::RatingRecord> rows;
};

SubjectResult run_subject(const Subject& s, std::size_t si, const StudyConfig& cfg) {
  SubjectResult res;
  const std::size_t n_curves = s.phantom.ground_truth().size();
  for (controller::Mode mode : {controller::Mode::Robotic, controller::Mode::Manual}) {
    for (int k = 1; k <= cfg.scans_per_method; ++k) {
      auto w = scan_with_path(s.phantom, cfg, mode, scan_seed(cfg, si, mode, k));
      auto& o = w.outcome;
      o.subject_id = s.id;
      o.scan_idx = k;
      const auto& match = o.match;
      for (std::size_t c = 0; c < n_curves; ++c) {
        auto flags = o.flags;
        if (!match[c]) flags.emplace_back("unmatched");
        const std::string flag_s = join(flags, ';');
        io::RatingRecord base{s.id, static_cast<int>(c + 1), o.method, k, "auto", std::nullopt, o.best_slice, flag_s};
        if (match[c]) base.angle_deg = o.measured[*match[c]].angle_deg;
        res.rows.push_back(base);
        // Raters are keyed by their model seed, not their name, so renaming
        // a rater leaves its draws alone.
        const std::uint64_t scan_id = stream_seed(si, method_index(mode), static_cast<std::uint64_t>(k), c);
        for (const auto& r : cfg.raters) {
          io::RatingRecord row = base;
          row.rater = r.name;
          if (match[c]) {
            spa::RaterModel m = r.model;
            m.seed = stream_seed(cfg.master_seed, kRaterStream, r.model.seed);
            const auto rated = spa::rate({o.measured[*match[c]]}, m, scan_id, w.path ? &*w.path : nullptr, cfg.measure);
            row.angle_deg = rated.front();
          }
          res.rows.push_back(std::move(row));
        }
      }
      res.scans.push_back(std::move(o));
    }
  }
  return res;
}

}  // namespace

ScanOutcome run_one_scan(const phantom::SpinePhantom& subject, const StudyConfig& cfg, controller::Mode mode,
                         std::uint64_t seed) {
  return scan_with_path(subject, cfg, mode, seed).outcome;
}

StudyOutput run_study(const StudyConfig& cfg) {
  validate(cfg);
  StudyOutput out;
  out.config = cfg;
  out.subjects = generate_cohort(cfg.cohort, cfg.master_seed);

  const auto n = static_cast<std::ptrdiff_t>(out.subjects.size());
  std::vector<SubjectResult> results(out.subjects.size());
  std::vector<std::exception_ptr> errors(out.subjects.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      results[static_cast<std::size_t>(i)] =
          run_subject(out.subjects[static_cast<std::size_t>(i)], static_cast<std::size_t>(i), cfg);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& r : results) {
    for (auto& s : r.scans) out.scans.push_back(std::move(s));
    for (auto& row : r.rows) out.ratings.push_back(std::move(row));
  }
  // Analyse the table as written, so `report` on ratings.csv reproduces the
  // stats byte for byte.
  out.ratings = io::parse_ratings_csv(io::ratings_csv(out.ratings));
  out.stats = report::analyze(out.ratings);

  json subjects = json::array(), scans = json::array();
  for (const auto& s : out.subjects)
    subjects.push_back({{"id", s.id}, {"phantom", s.phantom.config()}, {"ground_truth", s.phantom.ground_truth()}});
  for (const auto& s : out.scans)
    scans.push_back({{"subject_id", s.subject_id},
                     {"method", s.method},
                     {"scan_idx", s.scan_idx},
                     {"seed", s.seed},
                     {"posture", s.posture},
                     {"recording_hash", s.recording_hash},
                     {"best_slice", s.best_slice},
                     {"flags", s.flags}});
  out.manifest = {{"tool", "spinescan"},
                  {"version", std::string(version())},
                  {"config", to_json(cfg)},
                  {"subjects", subjects},
                  {"scans", scans}};
  return out;
}

void write_study(const std::filesystem::path& dir, const StudyOutput& out) {
  std::filesystem::create_directories(dir);
  io::write_ratings_csv(dir / "ratings.csv", out.ratings);
  io::write_json(dir / "stats.json", report::to_json(out.stats));
  io::write_text(dir / "report.md", report::render_markdown(out.stats));
  io::write_text(dir / "scatter.csv", report::scatter_csv(out.stats));
  io::write_text(dir / "scatter_fit.csv", report::scatter_fit_csv(out.stats));
  io::write_json(dir / "manifest.json", out.manifest);

  std::string scans = "subject_id,method,scan_idx,seed,best_slice,ridge_contrast,coupling_loss_segments,measured_deg,flags\n";
  for (const auto& s : out.scans) {
    std::vector<std::string> m;
    for (const auto& c : s.measured) m.push_back(io::fmt(c.angle_deg, 2));
    scans += s.subject_id + "," + s.method + "," + std::to_string(s.scan_idx) + "," + std::to_string(s.seed) + "," +
             std::to_string(s.best_slice) + "," + io::fmt(s.ridge_contrast) + "," +
             std::to_string(s.coupling_loss_segments) + "," + join(m, ';') + "," + join(s.flags, ';') + "\n";
    if (s.image) {
      const auto stem = dir / "coronal" / (s.subject_id + "_" + s.method + "_" + std::to_string(s.scan_idx));
      io::write_pgm(stem.string() + ".pgm", s.image->width, s.image->height, s.image->pixels);
      io::write_json(stem.string() + ".json", s.image_sidecar);
    }
  }
  io::write_text(dir / "scans.csv", scans);
}

}  // namespace spinescan::study
