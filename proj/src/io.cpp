#include "spinescan/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "spinescan/common.hpp"

namespace spinescan {
namespace {

using nlohmann::json;

template <typename T>
void opt(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) field = it->get<T>();
}

[[noreturn]] void io_fail(const std::string& m) { throw Error(ErrorCode::Io, m); }

}  // namespace

namespace phantom {

void to_json(json& j, const CurveSpec& c) {
  j = {{"apex_level", c.apex_level},
       {"target_spa_deg", c.target_spa_deg},
       {"direction", to_string(c.direction)},
       {"width_levels", c.width_levels}};
}

void from_json(const json& j, CurveSpec& c) {
  opt(j, "apex_level", c.apex_level);
  opt(j, "target_spa_deg", c.target_spa_deg);
  if (j.contains("direction")) c.direction = side_from_string(j.at("direction").get<std::string>());
  opt(j, "width_levels", c.width_levels);
}

void to_json(json& j, const PhantomConfig& c) {
  j = {{"n_vertebrae", c.n_vertebrae},
       {"spine_length_mm", c.spine_length_mm},
       {"curves", c.curves},
       {"sagittal_amplitude_mm", c.sagittal_amplitude_mm},
       {"skin_offset_mm", c.skin_offset_mm},
       {"back_stiffness_n_per_mm", c.back_stiffness_n_per_mm},
       {"torso_compliance_deg_per_n", c.torso_compliance_deg_per_n},
       {"scapula_gap_mm", c.scapula_gap_mm},
       {"coronal_surface_tilt_deg", c.coronal_surface_tilt_deg},
       {"seed", c.seed}};
}

void from_json(const json& j, PhantomConfig& c) {
  opt(j, "n_vertebrae", c.n_vertebrae);
  opt(j, "spine_length_mm", c.spine_length_mm);
  opt(j, "curves", c.curves);
  opt(j, "sagittal_amplitude_mm", c.sagittal_amplitude_mm);
  opt(j, "skin_offset_mm", c.skin_offset_mm);
  opt(j, "back_stiffness_n_per_mm", c.back_stiffness_n_per_mm);
  opt(j, "torso_compliance_deg_per_n", c.torso_compliance_deg_per_n);
  opt(j, "scapula_gap_mm", c.scapula_gap_mm);
  opt(j, "coronal_surface_tilt_deg", c.coronal_surface_tilt_deg);
  opt(j, "seed", c.seed);
}

void to_json(json& j, const Posture& p) {
  j = {{"coronal_tilt_deg", p.coronal_tilt_deg},
       {"shift_x_mm", p.shift_x_mm},
       {"shift_y_mm", p.shift_y_mm},
       {"shift_z_mm", p.shift_z_mm}};
}

void from_json(const json& j, Posture& p) {
  opt(j, "coronal_tilt_deg", p.coronal_tilt_deg);
  opt(j, "shift_x_mm", p.shift_x_mm);
  opt(j, "shift_y_mm", p.shift_y_mm);
  opt(j, "shift_z_mm", p.shift_z_mm);
}

void to_json(json& j, const CurveAngle& c) {
  j = {{"angle_deg", c.angle_deg},
       {"lower_level", c.lower_level},
       {"upper_level", c.upper_level},
       {"lower_z_mm", c.lower_z_mm},
       {"upper_z_mm", c.upper_z_mm},
       {"direction", to_string(c.direction)}};
}

}  // namespace phantom

namespace bmode {

void to_json(json& j, const ImagingConfig& c) {
  j = {{"width_px", c.width_px},
       {"height_px", c.height_px},
       {"probe_width_mm", c.probe_width_mm},
       {"depth_mm", c.depth_mm},
       {"speckle_sigma", c.speckle_sigma},
       {"shadow_contrast", c.shadow_contrast},
       {"noise_floor", c.noise_floor},
       {"frame_rate_hz", c.frame_rate_hz},
       {"coupling_threshold_mm", c.coupling_threshold_mm},
       {"seed", c.seed}};
}

void from_json(const json& j, ImagingConfig& c) {
  opt(j, "width_px", c.width_px);
  opt(j, "height_px", c.height_px);
  opt(j, "probe_width_mm", c.probe_width_mm);
  opt(j, "depth_mm", c.depth_mm);
  opt(j, "speckle_sigma", c.speckle_sigma);
  opt(j, "shadow_contrast", c.shadow_contrast);
  opt(j, "noise_floor", c.noise_floor);
  opt(j, "frame_rate_hz", c.frame_rate_hz);
  opt(j, "coupling_threshold_mm", c.coupling_threshold_mm);
  opt(j, "seed", c.seed);
}

}  // namespace bmode

namespace detector {

void to_json(json& j, const DetectorConfig& c) {
  j = {{"confidence_threshold", c.confidence_threshold},
       {"kernel_mm", c.kernel_mm},
       {"skip_top_mm", c.skip_top_mm},
       {"dead_column_ratio", c.dead_column_ratio}};
}

void from_json(const json& j, DetectorConfig& c) {
  opt(j, "confidence_threshold", c.confidence_threshold);
  opt(j, "kernel_mm", c.kernel_mm);
  opt(j, "skip_top_mm", c.skip_top_mm);
  opt(j, "dead_column_ratio", c.dead_column_ratio);
}

void to_json(json& j, const DetectorNoise& c) {
  j = {{"sigma_mm", c.sigma_mm}, {"miss_rate", c.miss_rate}, {"misclass_rate", c.misclass_rate}, {"seed", c.seed}};
}

void from_json(const json& j, DetectorNoise& c) {
  opt(j, "sigma_mm", c.sigma_mm);
  opt(j, "miss_rate", c.miss_rate);
  opt(j, "misclass_rate", c.misclass_rate);
  opt(j, "seed", c.seed);
}

}  // namespace detector

namespace controller {

void to_json(json& j, const FaultEvent& f) {
  j = {{"kind", to_string(f.kind)},
       {"t_start_s", f.t_start_s},
       {"duration_s", f.duration_s},
       {"magnitude_mm", f.magnitude_mm}};
}

void from_json(const json& j, FaultEvent& f) {
  if (j.contains("kind")) f.kind = fault_kind_from_string(j.at("kind").get<std::string>());
  opt(j, "t_start_s", f.t_start_s);
  opt(j, "duration_s", f.duration_s);
  opt(j, "magnitude_mm", f.magnitude_mm);
}

void to_json(json& j, const ScanConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"preset_force_n", c.preset_force_n},
       {"scan_speed_mm_s", c.scan_speed_mm_s},
       {"control_rate_hz", c.control_rate_hz},
       {"pid", {{"kp", c.pid.kp}, {"ki", c.pid.ki}, {"kd", c.pid.kd}}},
       {"k_pitch", c.k_pitch},
       {"kalman",
        {{"process_noise", c.kalman.process_noise},
         {"measurement_noise", c.kalman.measurement_noise},
         {"gate_mm", c.kalman.gate_mm}}},
       {"integrator_limit_ns", c.integrator_limit_ns},
       {"lateral_gain_per_s", c.lateral_gain_per_s},
       {"lateral_rate_limit_mm_s", c.lateral_rate_limit_mm_s},
       {"approach_standoff_mm", c.approach_standoff_mm},
       {"approach_speed_mm_s", c.approach_speed_mm_s},
       {"contact_threshold_n", c.contact_threshold_n},
       {"settle_ticks", c.settle_ticks},
       {"z_margin_mm", c.z_margin_mm},
       {"max_duration_s", c.max_duration_s},
       {"manual_force_n", c.manual_force_n},
       {"jitter_mm", c.jitter_mm},
       {"faults", c.faults},
       {"detector", c.detector},
       {"seed", c.seed}};
}

void from_json(const json& j, ScanConfig& c) {
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  opt(j, "preset_force_n", c.preset_force_n);
  opt(j, "scan_speed_mm_s", c.scan_speed_mm_s);
  opt(j, "control_rate_hz", c.control_rate_hz);
  if (j.contains("pid")) {
    const auto& p = j.at("pid");
    opt(p, "kp", c.pid.kp);
    opt(p, "ki", c.pid.ki);
    opt(p, "kd", c.pid.kd);
  }
  opt(j, "k_pitch", c.k_pitch);
  if (j.contains("kalman")) {
    const auto& k = j.at("kalman");
    opt(k, "process_noise", c.kalman.process_noise);
    opt(k, "measurement_noise", c.kalman.measurement_noise);
    opt(k, "gate_mm", c.kalman.gate_mm);
  }
  opt(j, "integrator_limit_ns", c.integrator_limit_ns);
  opt(j, "lateral_gain_per_s", c.lateral_gain_per_s);
  opt(j, "lateral_rate_limit_mm_s", c.lateral_rate_limit_mm_s);
  opt(j, "approach_standoff_mm", c.approach_standoff_mm);
  opt(j, "approach_speed_mm_s", c.approach_speed_mm_s);
  opt(j, "contact_threshold_n", c.contact_threshold_n);
  opt(j, "settle_ticks", c.settle_ticks);
  opt(j, "z_margin_mm", c.z_margin_mm);
  opt(j, "max_duration_s", c.max_duration_s);
  opt(j, "manual_force_n", c.manual_force_n);
  opt(j, "jitter_mm", c.jitter_mm);
  opt(j, "faults", c.faults);
  opt(j, "detector", c.detector);
  opt(j, "seed", c.seed);
}

}  // namespace controller

namespace spa {

void to_json(json& j, const RaterModel& r) {
  j = {{"angle_sigma_deg", r.angle_sigma_deg},
       {"level_jitter", r.level_jitter},
       {"bias_deg", r.bias_deg},
       {"seed", r.seed}};
}

void from_json(const json& j, RaterModel& r) {
  opt(j, "angle_sigma_deg", r.angle_sigma_deg);
  opt(j, "level_jitter", r.level_jitter);
  opt(j, "bias_deg", r.bias_deg);
  opt(j, "seed", r.seed);
}

void to_json(json& j, const ExtractConfig& c) {
  j = {{"flank_inner_mm", c.flank_inner_mm},
       {"flank_outer_mm", c.flank_outer_mm},
       {"centre_half_mm", c.centre_half_mm},
       {"presmooth_sigma_mm", c.presmooth_sigma_mm},
       {"max_step_px", c.max_step_px},
       {"max_gap_rows", c.max_gap_rows},
       {"min_contrast", c.min_contrast},
       {"relative_threshold", c.relative_threshold},
       {"min_coverage", c.min_coverage}};
}

void from_json(const json& j, ExtractConfig& c) {
  opt(j, "flank_inner_mm", c.flank_inner_mm);
  opt(j, "flank_outer_mm", c.flank_outer_mm);
  opt(j, "centre_half_mm", c.centre_half_mm);
  opt(j, "presmooth_sigma_mm", c.presmooth_sigma_mm);
  opt(j, "max_step_px", c.max_step_px);
  opt(j, "max_gap_rows", c.max_gap_rows);
  opt(j, "min_contrast", c.min_contrast);
  opt(j, "relative_threshold", c.relative_threshold);
  opt(j, "min_coverage", c.min_coverage);
}

void to_json(json& j, const MeasureConfig& c) {
  j = {{"kernel_fwhm_mm", c.kernel_fwhm_mm},
       {"resample_mm", c.resample_mm},
       {"pivot_threshold_deg", c.pivot_threshold_deg},
       {"end_margin_mm", c.end_margin_mm},
       {"min_length_mm", c.min_length_mm},
       {"level_pitch_mm", c.level_pitch_mm},
       {"max_curves", c.max_curves}};
}

void from_json(const json& j, MeasureConfig& c) {
  opt(j, "kernel_fwhm_mm", c.kernel_fwhm_mm);
  opt(j, "resample_mm", c.resample_mm);
  opt(j, "pivot_threshold_deg", c.pivot_threshold_deg);
  opt(j, "end_margin_mm", c.end_margin_mm);
  opt(j, "min_length_mm", c.min_length_mm);
  opt(j, "level_pitch_mm", c.level_pitch_mm);
  opt(j, "max_curves", c.max_curves);
}

}  // namespace spa

namespace recon {

void to_json(json& j, const SliceDepths& d) {
  j = {{"first_mm", d.first_mm}, {"step_mm", d.step_mm}, {"count", d.count}, {"band_mm", d.band_mm}};
}

void from_json(const json& j, SliceDepths& d) {
  opt(j, "first_mm", d.first_mm);
  opt(j, "step_mm", d.step_mm);
  opt(j, "count", d.count);
  opt(j, "band_mm", d.band_mm);
}

}  // namespace recon

namespace io {

json read_json(const fs::path& p) {
  const std::string text = read_text(p);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Io, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) io_fail("cannot open " + p.string() + " for writing");
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) io_fail("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) io_fail("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_pgm(const fs::path& p, int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height)
    throw Error(ErrorCode::InvalidArgument, "PGM dimensions do not match the pixel buffer");
  std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_text(p, s);
}

Gray8 read_pgm(const fs::path& p) {
  const std::string s = read_text(p);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const auto start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  };
  if (token() != "P5") io_fail(p.string() + ": not a binary PGM");
  Gray8 g;
  try {
    g.width = std::stoi(token());
    g.height = std::stoi(token());
    if (std::stoi(token()) != 255) io_fail(p.string() + ": only 8-bit PGM is supported");
  } catch (const std::logic_error&) {
    io_fail(p.string() + ": malformed PGM header");
  }
  ++pos;  // single whitespace after maxval
  const auto n = static_cast<std::size_t>(g.width) * g.height;
  if (g.width <= 0 || g.height <= 0 || s.size() < pos + n) io_fail(p.string() + ": truncated PGM");
  g.pixels.assign(s.begin() + static_cast<std::ptrdiff_t>(pos), s.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return g;
}

json phantom_document(const phantom::SpinePhantom& ph) {
  json z = json::array(), x = json::array(), y = json::array();
  for (double zw = std::ceil(ph.z_min()); zw <= ph.z_max(); zw += 1.0) {
    const Vec3 c = ph.centerline_world(zw);
    z.push_back(zw);
    x.push_back(c.x());
    y.push_back(c.y());
  }
  json regions = json::array();
  for (const auto& r : ph.region_boundaries())
    regions.push_back({{"region", to_string(r.region)}, {"z_begin_mm", r.z_begin_mm}, {"z_end_mm", r.z_end_mm}});
  return {{"config", ph.config()},
          {"posture", ph.posture()},
          {"ground_truth", ph.ground_truth()},
          {"regions", regions},
          {"centerline", {{"pitch_mm", 1.0}, {"z", z}, {"x", x}, {"y", y}}}};
}

phantom::SpinePhantom phantom_from_document(const json& doc) {
  const json& cfg_j = doc.contains("config") ? doc.at("config") : doc;
  auto cfg = cfg_j.get<phantom::PhantomConfig>();
  phantom::Posture posture;
  if (doc.contains("posture")) posture = doc.at("posture").get<phantom::Posture>();
  return phantom::build_phantom(cfg).with_posture(posture);
}

namespace {

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.pgm", i);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) io_fail("not a number: '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) io_fail("not an integer: '" + s + "'");
  return v;
}

// Round-trip formatting for pose values.
std::string exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);  // no "-0.0000"
  return s;
}

void write_recording(const fs::path& dir, const bmode::ScanRecording& rec) {
  fs::create_directories(dir);
  std::string csv = "timestamp,x,y,z,roll,pitch,yaw,contact_fraction\n";
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    write_pgm(dir / frame_name(i), f.width, f.height, f.pixels);
    const auto& p = f.pose;
    csv += exact(p.timestamp) + "," + exact(p.position.x()) + "," + exact(p.position.y()) + "," +
           exact(p.position.z()) + "," + exact(p.roll) + "," + exact(p.pitch) + "," + exact(p.yaw) + "," +
           exact(f.contact_fraction) + "\n";
  }
  write_text(dir / "poses.csv", csv);
  json side = {{"imaging", rec.imaging},
               {"frame_count", rec.frames.size()},
               {"hash", recording_hash(rec)},
               {"metadata", rec.metadata}};
  write_json(dir / "recording.json", side);
}

bmode::ScanRecording read_recording(const fs::path& dir) {
  bmode::ScanRecording rec;
  const json side = read_json(dir / "recording.json");
  rec.imaging = side.at("imaging").get<bmode::ImagingConfig>();
  if (side.contains("metadata")) rec.metadata = side.at("metadata");
  std::istringstream in(read_text(dir / "poses.csv"));
  std::string line;
  std::getline(in, line);  // header
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split(line, ',');
    if (c.size() != 8) io_fail("poses.csv line " + std::to_string(i + 2) + ": expected 8 columns");
    const auto g = read_pgm(dir / frame_name(i));
    bmode::BModeFrame f;
    f.width = g.width;
    f.height = g.height;
    f.pixels = g.pixels;
    f.pose.timestamp = to_double(c[0]);
    f.pose.position = {to_double(c[1]), to_double(c[2]), to_double(c[3])};
    f.pose.roll = to_double(c[4]);
    f.pose.pitch = to_double(c[5]);
    f.pose.yaw = to_double(c[6]);
    f.contact_fraction = to_double(c[7]);
    rec.frames.push_back(std::move(f));
    ++i;
  }
  if (rec.frames.empty()) io_fail(dir.string() + ": recording has no frames");
  return rec;
}

std::string recording_hash(const bmode::ScanRecording& rec) {
  // FNV-1a over pixels and pose bits.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : rec.frames) {
    feed(f.pixels.data(), f.pixels.size());
    const double v[7] = {f.pose.position.x(), f.pose.position.y(), f.pose.position.z(),
                         f.pose.roll,         f.pose.pitch,        f.pose.yaw,
                         f.pose.timestamp};
    feed(v, sizeof v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_detections_csv(const fs::path& p, const json& detections) {
  std::string s = "frame_index,lateral_px,lateral_mm,confidence,region,present\n";
  for (const auto& d : detections) {
    const bool present = d.value("present", false);
    s += std::to_string(d.at("frame_index").get<std::uint64_t>()) + ",";
    if (present) {
      s += fmt(d.at("lateral_px").get<double>()) + "," + fmt(d.at("lateral_mm").get<double>()) + "," +
           fmt(d.at("confidence").get<double>());
    } else {
      s += ",,";
    }
    s += "," + d.value("region", std::string()) + "," + (present ? "1" : "0") + "\n";
  }
  write_text(p, s);
}

json coronal_sidecar(const recon::CoronalImage& img, const std::string& source_hash) {
  return {{"width", img.width},
          {"height", img.height},
          {"spacing_mm", img.spacing},
          {"x0_mm", img.x0},
          {"z0_mm", img.z0},
          {"depth_mm", img.depth_mm},
          {"band_mm", img.band_mm},
          {"slice_index", img.slice_index},
          {"provenance", recon::to_string(img.provenance)},
          {"source_hash", source_hash},
          {"encoding", "0 = no data, 1..255 = intensity 0..1"}};
}

void write_coronal(const fs::path& pgm, const recon::CoronalImage& img, const std::string& source_hash) {
  std::vector<std::uint8_t> px(img.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (!img.mask[i]) continue;
    const double v = std::clamp(static_cast<double>(img.pixels[i]), 0.0, 1.0);
    px[i] = static_cast<std::uint8_t>(1 + std::lround(v * 254.0));
  }
  write_pgm(pgm, img.width, img.height, px);
  auto side = pgm;
  write_json(side.replace_extension(".json"), coronal_sidecar(img, source_hash));
}

recon::CoronalImage read_coronal(const fs::path& pgm) {
  const auto g = read_pgm(pgm);
  auto side_path = pgm;
  const json side = read_json(side_path.replace_extension(".json"));
  recon::CoronalImage img;
  img.width = g.width;
  img.height = g.height;
  img.spacing = side.at("spacing_mm").get<double>();
  img.x0 = side.at("x0_mm").get<double>();
  img.z0 = side.at("z0_mm").get<double>();
  img.depth_mm = side.value("depth_mm", 0.0);
  img.band_mm = side.value("band_mm", 0.0);
  img.slice_index = side.value("slice_index", 0);
  img.provenance = side.value("provenance", std::string("volume")) == "direct" ? recon::Provenance::Direct
                                                                                : recon::Provenance::Volume;
  img.pixels.resize(g.pixels.size());
  img.mask.resize(g.pixels.size());
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    img.mask[i] = g.pixels[i] != 0;
    img.pixels[i] = g.pixels[i] == 0 ? 0.0f : static_cast<float>((g.pixels[i] - 1) / 254.0);
  }
  return img;
}

std::string ratings_csv(const std::vector<RatingRecord>& rows) {
  std::string s = std::string(kRatingHeader) + "\n";
  for (const auto& r : rows) {
    s += r.subject_id + "," + std::to_string(r.curve_id) + "," + r.method + "," + std::to_string(r.scan_idx) +
         "," + r.rater + "," + (r.angle_deg ? fmt(*r.angle_deg) : std::string()) + "," +
         std::to_string(r.slice_index) + "," + r.flags + "\n";
  }
  return s;
}

std::vector<RatingRecord> parse_ratings_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) io_fail("rating table is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRatingHeader) io_fail("rating table header does not match the expected schema");
  std::vector<RatingRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = split(line, ',');
    if (c.size() != 8) io_fail("rating table line " + std::to_string(lineno) + ": expected 8 columns");
    RatingRecord r;
    r.subject_id = c[0];
    r.curve_id = to_int(c[1]);
    r.method = c[2];
    r.scan_idx = to_int(c[3]);
    r.rater = c[4];
    if (!c[5].empty()) r.angle_deg = to_double(c[5]);
    r.slice_index = to_int(c[6]);
    r.flags = c[7];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_ratings_csv(const fs::path& p, const std::vector<RatingRecord>& rows) { write_text(p, ratings_csv(rows)); }

std::vector<RatingRecord> read_ratings_csv(const fs::path& p) { return parse_ratings_csv(read_text(p)); }

}  // namespace io
}  // namespace spinescan
