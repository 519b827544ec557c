// spinescan command-line driver.
//
//   spinescan phantom --curve 11:20:R --out ph/
//   spinescan scan    --phantom ph/phantom.json --mode robotic --out rec/
//   spinescan recon   --in rec/ --depths 9 --method direct --out cor/
//   spinescan measure --image cor/slice_05.pgm --subject S01 --method robotic --scan-idx 1 --out m/
//   spinescan study   --seed 7 --out study/
//   spinescan report  --in study/ratings.csv --out rep/
//
// Success prints a JSON summary on stdout and exits 0. Failure prints
// {"error": {"code", "message"}} on stdout and exits nonzero.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spinescan/controller.hpp"
#include "spinescan/io.hpp"
#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"
#include "spinescan/report.hpp"
#include "spinescan/spa.hpp"
#include "spinescan/study.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spinescan;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

json load_config(const Globals& g) { return g.config.empty() ? json::object() : io::read_json(g.config); }

Side parse_side(const std::string& s) {
  if (s == "L" || s == "l" || s == "left") return Side::Left;
  if (s == "R" || s == "r" || s == "right") return Side::Right;
  throw Error(ErrorCode::InvalidArgument, "side must be L or R, got '" + s + "'");
}

// "apex:angle:side", e.g. "11:20:R".
phantom::CurveSpec parse_curve(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ':') {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() < 2 || parts.size() > 3)
    throw Error(ErrorCode::InvalidArgument, "curve must be apex:angle[:side], got '" + s + "'");
  phantom::CurveSpec c;
  try {
    c.apex_level = std::stod(parts[0]);
    c.target_spa_deg = std::stod(parts[1]);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "curve must be apex:angle[:side], got '" + s + "'");
  }
  if (parts.size() == 3) c.direction = parse_side(parts[2]);
  return c;
}

// "kind:start:duration:magnitude", e.g. "lift_off:20:2:5".
controller::FaultEvent parse_fault(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ':') {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 4) throw Error(ErrorCode::InvalidArgument, "fault must be kind:start:duration:magnitude");
  controller::FaultEvent f;
  f.kind = controller::fault_kind_from_string(parts[0]);
  try {
    f.t_start_s = std::stod(parts[1]);
    f.duration_s = std::stod(parts[2]);
    f.magnitude_mm = std::stod(parts[3]);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "fault must be kind:start:duration:magnitude");
  }
  return f;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
  std::vector<std::string> curves;
  std::optional<double> torso_compliance;
  std::optional<double> scapula_gap;
};

json cmd_phantom(const Globals& g, const PhantomArgs& a) {
  const json cfg_j = load_config(g);
  auto cfg = (cfg_j.contains("config") ? cfg_j.at("config") : cfg_j).get<phantom::PhantomConfig>();
  if (!a.curves.empty()) {
    cfg.curves.clear();
    for (const auto& c : a.curves) cfg.curves.push_back(parse_curve(c));
  }
  if (a.torso_compliance) cfg.torso_compliance_deg_per_n = *a.torso_compliance;
  if (a.scapula_gap) cfg.scapula_gap_mm = *a.scapula_gap;
  if (g.seed) cfg.seed = *g.seed;
  const auto ph = phantom::build_phantom(cfg);
  const fs::path p = fs::path(g.out) / "phantom.json";
  io::write_json(p, io::phantom_document(ph));
  return {{"phantom", p.string()}, {"ground_truth", ph.ground_truth()}};
}

// ---------------------------------------------------------------- scan

struct ScanArgs {
  std::string phantom;
  std::string mode = "robotic";
  std::optional<double> force;
  std::optional<double> speed;
  std::optional<int> width, height;
  std::vector<std::string> faults;
  bool noiseless = false;
};

json cmd_scan(const Globals& g, const ScanArgs& a) {
  const auto ph = io::phantom_from_document(io::read_json(a.phantom));
  const json cfg_j = load_config(g);
  const auto mode = controller::mode_from_string(a.mode);

  controller::ScanConfig sc = mode == controller::Mode::Manual ? controller::manual_defaults() : controller::ScanConfig{};
  bmode::ImagingConfig imaging;
  detector::DetectorNoise noise{2.0, 0.3, 0.02, 0};
  const bool sectioned = cfg_j.contains("scan") || cfg_j.contains("imaging") || cfg_j.contains("detector_noise");
  if (sectioned) {
    if (cfg_j.contains("scan")) controller::from_json(cfg_j.at("scan"), sc);
    if (cfg_j.contains("imaging")) bmode::from_json(cfg_j.at("imaging"), imaging);
    if (cfg_j.contains("detector_noise")) detector::from_json(cfg_j.at("detector_noise"), noise);
  } else {
    controller::from_json(cfg_j, sc);
  }
  sc.mode = mode;
  if (a.force) (mode == controller::Mode::Robotic ? sc.preset_force_n : sc.manual_force_n) = *a.force;
  if (a.speed) sc.scan_speed_mm_s = *a.speed;
  if (a.width) imaging.width_px = *a.width;
  if (a.height) imaging.height_px = *a.height;
  for (const auto& f : a.faults) sc.faults.push_back(parse_fault(f));
  if (a.noiseless) {
    noise = {};
    sc.jitter_mm = 0.0;
  }
  const std::uint64_t seed = g.seed.value_or(sc.seed);
  sc.seed = seed;
  imaging.seed = seed;
  noise.seed = seed;

  auto rec = controller::run_scan(ph, sc, imaging, noise);
  rec.metadata["scan_config"] = sc;
  rec.metadata["detector_noise"] = noise;
  rec.metadata["phantom"] = ph.config();
  rec.metadata["posture"] = ph.posture();
  rec.metadata["seed"] = seed;

  const fs::path dir = g.out;
  io::write_recording(dir, rec);
  if (rec.metadata.contains("detections")) io::write_detections_csv(dir / "detections.csv", rec.metadata["detections"]);
  return {{"recording", dir.string()},
          {"frames", rec.frames.size()},
          {"hash", io::recording_hash(rec)},
          {"safety_stop", rec.metadata.value("safety_stop", false)},
          {"coupling_loss_segments", rec.metadata.value("flags", json::array()).size()}};
}

// ---------------------------------------------------------------- recon

struct ReconArgs {
  std::string in;
  int depths = 9;
  std::string method = "direct";
  double spacing = 0.5;
};

json cmd_recon(const Globals& g, const ReconArgs& a) {
  if (a.method != "direct" && a.method != "volume")
    throw Error(ErrorCode::InvalidArgument, "method must be volume or direct, got '" + a.method + "'");
  const json cfg_j = load_config(g);
  recon::SliceDepths sd = cfg_j.contains("depths") ? cfg_j.at("depths").get<recon::SliceDepths>() : recon::SliceDepths{};
  sd.count = a.depths;
  if (sd.count < 1) throw Error(ErrorCode::InvalidArgument, "depths must be at least 1");

  const auto rec = io::read_recording(a.in);
  const std::string hash = io::recording_hash(rec);
  const auto skin = recon::SkinMap::from_recording(rec);
  std::optional<recon::Volume> vol;
  if (a.method == "volume") vol = recon::compound(rec, a.spacing);

  const fs::path dir = g.out;
  json slices = json::array();
  int best = 0;
  double best_rc = 0.0;
  for (int k = 1; k <= sd.count; ++k) {
    json entry = {{"slice_index", k}, {"depth_mm", sd.depth(k)}};
    try {
      auto img = vol ? recon::vpi_volume(*vol, skin, sd.depth(k), sd.band_mm)
                     : recon::vpi_direct(rec, skin, sd.depth(k), sd.band_mm, a.spacing);
      img.slice_index = k;
      char name[32];
      std::snprintf(name, sizeof name, "slice_%02d.pgm", k);
      io::write_coronal(dir / name, img, hash);
      const double rc = spa::ridge_contrast(img);
      entry["image"] = name;
      entry["ridge_contrast"] = rc;
      if (best == 0 || rc > best_rc) {
        best = k;
        best_rc = rc;
      }
    } catch (const Error& e) {
      entry["error"] = e.what();
    }
    slices.push_back(std::move(entry));
  }
  const json summary = {{"source", a.in},
                        {"source_hash", hash},
                        {"method", a.method},
                        {"depths", sd},
                        {"slices", slices},
                        {"best_slice", best}};
  io::write_json(dir / "recon.json", summary);
  return summary;
}

// ---------------------------------------------------------------- measure

struct MeasureArgs {
  std::vector<std::string> images;
  std::string subject = "S01";
  std::string method = "robotic";
  int scan_idx = 1;
  std::string ratings;
};

json cmd_measure(const Globals& g, const MeasureArgs& a) {
  const json cfg_j = load_config(g);
  auto cfg = study::study_config_from_json(cfg_j.contains("config") ? cfg_j.at("config") : cfg_j);
  if (g.seed) cfg.master_seed = *g.seed;
  const auto mode = controller::mode_from_string(a.method);
  const int method_idx = mode == controller::Mode::Robotic ? 0 : 1;

  const fs::path ratings_path = a.ratings.empty() ? fs::path(g.out) / "ratings.csv" : fs::path(a.ratings);
  std::vector<io::RatingRecord> rows;
  if (fs::exists(ratings_path)) rows = io::read_ratings_csv(ratings_path);

  json results = json::array();
  std::vector<io::RatingRecord> added;
  for (std::size_t n = 0; n < a.images.size(); ++n) {
    const auto img = io::read_coronal(a.images[n]);
    const int scan_idx = a.scan_idx + static_cast<int>(n);
    std::vector<phantom::CurveAngle> curves;
    std::vector<std::string> flags;
    std::optional<spa::SpinousPath> path;
    try {
      path = spa::extract_path(img, cfg.extract);
      flags = path->flags;
      curves = spa::measure_spa(*path, cfg.measure);
    } catch (const Error&) {
      flags.emplace_back(path ? "measure_failed" : "extraction_failed");
    }
    std::string flag_s;
    for (const auto& f : flags) flag_s += (flag_s.empty() ? "" : ";") + f;

    // Without ground truth, curve ids follow the measurement order.
    for (std::size_t c = 0; c < curves.size(); ++c) {
      io::RatingRecord base{a.subject,   static_cast<int>(c + 1), std::string(controller::to_string(mode)),
                            scan_idx,    "auto",                  curves[c].angle_deg,
                            img.slice_index, flag_s};
      added.push_back(base);
      const std::uint64_t scan_id =
          stream_seed(fnv1a(a.subject), method_idx, static_cast<std::uint64_t>(scan_idx), c);
      for (const auto& r : cfg.raters) {
        spa::RaterModel m = r.model;
        m.seed = stream_seed(cfg.master_seed, 0x4a7eULL, r.model.seed);
        auto row = base;
        row.rater = r.name;
        row.angle_deg = spa::rate({curves[c]}, m, scan_id, path ? &*path : nullptr, cfg.measure).front();
        added.push_back(std::move(row));
      }
    }
    results.push_back({{"image", a.images[n]},
                       {"scan_idx", scan_idx},
                       {"slice_index", img.slice_index},
                       {"curves", curves},
                       {"flags", flags}});
  }

  // Re-measuring a scan replaces its earlier rows.
  auto same_key = [](const io::RatingRecord& x, const io::RatingRecord& y) {
    return x.subject_id == y.subject_id && x.method == y.method && x.scan_idx == y.scan_idx;
  };
  std::erase_if(rows, [&](const io::RatingRecord& r) {
    for (const auto& n : added)
      if (same_key(r, n)) return true;
    return false;
  });
  rows.insert(rows.end(), added.begin(), added.end());
  io::write_ratings_csv(ratings_path, rows);
  return {{"ratings", ratings_path.string()}, {"rows_added", added.size()}, {"measurements", results}};
}

// ---------------------------------------------------------------- study

struct StudyArgs {
  std::optional<int> subjects;
  std::optional<int> scans;
  bool noiseless = false;
  bool no_images = false;
};

json cmd_study(const Globals& g, const StudyArgs& a) {
  const json cfg_j = load_config(g);
  study::StudyConfig cfg;
  if (a.noiseless) {
    cfg = study::StudyConfig::noiseless();
    if (!cfg_j.empty()) throw Error(ErrorCode::InvalidArgument, "--noiseless and --config are exclusive");
  } else {
    // A run manifest carries its configuration under "config".
    cfg = study::study_config_from_json(cfg_j.contains("config") ? cfg_j.at("config") : cfg_j);
  }
  if (g.seed) cfg.master_seed = *g.seed;
  if (a.subjects) {
    cfg.cohort.n_subjects = *a.subjects;
    cfg.cohort.n_single = std::min(cfg.cohort.n_single, *a.subjects);
  }
  if (a.scans) cfg.scans_per_method = *a.scans;
  if (a.no_images) cfg.keep_images = false;

  const auto out = study::run_study(cfg);
  study::write_study(g.out, out);
  std::size_t curves = 0;
  for (const auto& s : out.subjects) curves += s.phantom.ground_truth().size();
  return {{"out", g.out},
          {"master_seed", cfg.master_seed},
          {"subjects", out.subjects.size()},
          {"curves", curves},
          {"scans", out.scans.size()},
          {"ratings", out.ratings.size()}};
}

// ---------------------------------------------------------------- report

json cmd_report(const Globals& g, const std::string& in) {
  const auto rows = io::read_ratings_csv(in);
  const auto stats = report::analyze(rows);
  const fs::path dir = g.out;
  io::write_json(dir / "stats.json", report::to_json(stats));
  io::write_text(dir / "report.md", report::render_markdown(stats));
  io::write_text(dir / "scatter.csv", report::scatter_csv(stats));
  io::write_text(dir / "scatter_fit.csv", report::scatter_fit_csv(stats));
  return {{"out", dir.string()}, {"rows", rows.size()}, {"scatter_points", stats.scatter.size()}};
}

int fail(std::string_view code, const std::string& message, int status) {
  std::cout << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated robotic and manual spine ultrasound scanning with SPA reliability analysis"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config, "JSON configuration for the subcommand")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  PhantomArgs pa;
  auto* phantom_cmd = app.add_subcommand("phantom", "Build a spine phantom and write phantom.json");
  phantom_cmd->add_option("--curve", pa.curves, "Curve as apex:angle[:L|R]; repeatable");
  phantom_cmd->add_option("--torso-compliance", pa.torso_compliance, "Bend per newton of probe force, deg/N");
  phantom_cmd->add_option("--scapula-gap", pa.scapula_gap, "Scapula prominence, mm");

  ScanArgs sa;
  auto* scan_cmd = app.add_subcommand("scan", "Scan a phantom and write a recording directory");
  scan_cmd->add_option("--phantom", sa.phantom, "Phantom document")->required()->check(CLI::ExistingFile);
  scan_cmd->add_option("--mode", sa.mode, "robotic or manual")->check(CLI::IsMember({"robotic", "manual"}));
  scan_cmd->add_option("--force", sa.force, "Contact force setpoint, N");
  scan_cmd->add_option("--speed", sa.speed, "Scan speed, mm/s");
  scan_cmd->add_option("--width", sa.width, "Frame width, px");
  scan_cmd->add_option("--height", sa.height, "Frame height, px");
  scan_cmd->add_option("--fault", sa.faults, "Fault as kind:start_s:duration_s:magnitude_mm; repeatable");
  scan_cmd->add_flag("--noiseless", sa.noiseless, "Disable detector noise and hand jitter");

  ReconArgs ra;
  auto* recon_cmd = app.add_subcommand("recon", "Project a recording into coronal slices");
  recon_cmd->add_option("--in", ra.in, "Recording directory")->required()->check(CLI::ExistingDirectory);
  recon_cmd->add_option("--depths", ra.depths, "Number of depth slices");
  recon_cmd->add_option("--method", ra.method, "volume or direct")->check(CLI::IsMember({"volume", "direct"}));
  recon_cmd->add_option("--spacing", ra.spacing, "Pixel spacing, mm");

  MeasureArgs ma;
  auto* measure_cmd = app.add_subcommand("measure", "Measure SPA on coronal images and append to a rating table");
  measure_cmd->add_option("--image", ma.images, "Coronal PGM; repeatable, scan index increments")
      ->required()
      ->check(CLI::ExistingFile);
  measure_cmd->add_option("--subject", ma.subject, "Subject id");
  measure_cmd->add_option("--method", ma.method, "robotic or manual")->check(CLI::IsMember({"robotic", "manual"}));
  measure_cmd->add_option("--scan-idx", ma.scan_idx, "Scan index of the first image");
  measure_cmd->add_option("--ratings", ma.ratings, "Rating table to append to (default <out>/ratings.csv)");

  StudyArgs sta;
  auto* study_cmd = app.add_subcommand("study", "Run the repeated-scan reliability study");
  study_cmd->add_option("--subjects", sta.subjects, "Cohort size");
  study_cmd->add_option("--scans", sta.scans, "Scans per method");
  study_cmd->add_flag("--noiseless", sta.noiseless, "Turn every noise source off");
  study_cmd->add_flag("--no-images", sta.no_images, "Skip writing coronal images");

  std::string report_in;
  auto* report_cmd = app.add_subcommand("report", "Analyse a rating table");
  report_cmd->add_option("--in", report_in, "Rating table CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    json result;
    if (*phantom_cmd) result = cmd_phantom(g, pa);
    else if (*scan_cmd) result = cmd_scan(g, sa);
    else if (*recon_cmd) result = cmd_recon(g, ra);
    else if (*measure_cmd) result = cmd_measure(g, ma);
    else if (*study_cmd) result = cmd_study(g, sta);
    else if (*report_cmd) result = cmd_report(g, report_in);
    std::cout << result.dump() << '\n';
    return 0;
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what(), 1);
  } catch (const json::exception& e) {
    return fail("invalid_json", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
