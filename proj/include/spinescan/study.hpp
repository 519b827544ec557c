#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinescan/controller.hpp"
#include "spinescan/detector.hpp"
#include "spinescan/io.hpp"
#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"
#include "spinescan/report.hpp"
#include "spinescan/spa.hpp"

namespace spinescan::study {

struct CohortConfig {
  int n_subjects = 23;
  int n_single = 10;  // the rest carry a double curve
  double angle_min_deg = 7.0;
  double angle_max_deg = 31.0;
  double angle_mean_deg = 15.7;
  double angle_sd_deg = 5.6;
  double mean_tolerance_deg = 1.5;
  int max_attempts = 500;
  phantom::PhantomConfig anatomy;  // everything but the curves
};

void validate(const CohortConfig& c);

struct Subject {
  std::string id;
  phantom::SpinePhantom phantom;
};

// Target angles are drawn from a normal truncated to the angle range, and
// the whole cohort is redrawn until the empirical mean is within tolerance
// and every phantom builds.
std::vector<Subject> generate_cohort(const CohortConfig& cfg, std::uint64_t seed);

struct NamedRater {
  std::string name;
  spa::RaterModel model;
};

// Small rigid change of posture between scans.
struct PostureJitter {
  double tilt_deg = 2.0;
  double shift_mm = 3.0;
};

struct StudyConfig {
  CohortConfig cohort;
  int scans_per_method = 3;
  // Angle noise set so the repeat MAD of a cell lands near 2.2 to 2.5 deg.
  std::vector<NamedRater> raters{{"R1", {2.0, 0.0, 0.0, 1}}, {"R2", {2.2, 0.0, 0.0, 2}}};
  detector::DetectorNoise detector_noise{2.0, 0.3, 0.02, 0};
  controller::ScanConfig robotic;
  controller::ScanConfig manual = controller::manual_defaults();
  bmode::ImagingConfig imaging{160, 120};
  PostureJitter posture;
  // When false every repeat of a method reuses one seed, so repeats differ
  // only through the other noise sources.
  bool independent_repeats = true;
  recon::SliceDepths depths;
  recon::Provenance recon_method = recon::Provenance::Direct;
  double recon_spacing_mm = 0.5;
  spa::ExtractConfig extract;
  spa::MeasureConfig measure{.max_curves = 4};
  double match_tolerance_mm = 60.0;
  std::uint64_t master_seed = 1;
  bool keep_images = true;

  // Every noise source off: detector, raters, posture, operator jitter and
  // speckle variation between repeats.
  static StudyConfig noiseless();
};

void validate(const StudyConfig& c);

nlohmann::json to_json(const StudyConfig& c);
StudyConfig study_config_from_json(const nlohmann::json& j);

struct ScanOutcome {
  std::string subject_id;
  std::string method;
  int scan_idx = 0;
  std::uint64_t seed = 0;
  phantom::Posture posture;
  std::string recording_hash;
  int best_slice = 0;
  double ridge_contrast = 0.0;
  int coupling_loss_segments = 0;
  std::vector<phantom::CurveAngle> measured;         // every candidate curve
  std::vector<std::optional<std::size_t>> match;     // per ground-truth curve, into measured
  std::vector<std::string> flags;
  std::optional<io::Gray8> image;  // best coronal slice, PGM encoding
  nlohmann::json image_sidecar;
};

struct StudyOutput {
  StudyConfig config;
  std::vector<Subject> subjects;
  std::vector<ScanOutcome> scans;
  std::vector<io::RatingRecord> ratings;
  report::StatsReport stats;
  nlohmann::json manifest;
};

// Measures the ground-truth curves of `truth` in `measured`: pairs are
// taken closest apex first, each measured curve used once, and pairs further
// apart than `tolerance_mm` are not made.
std::vector<std::optional<std::size_t>> match_curves(const std::vector<phantom::CurveAngle>& truth,
                                                     const std::vector<phantom::CurveAngle>& measured,
                                                     double tolerance_mm);

// One scan through the pipeline: scan, project every depth, pick the slice
// with the strongest ridge, trace, measure and match against the truth.
ScanOutcome run_one_scan(const phantom::SpinePhantom& subject, const StudyConfig& cfg, controller::Mode mode,
                         std::uint64_t seed);

StudyOutput run_study(const StudyConfig& cfg);

// Writes ratings.csv, stats.json, report.md, scatter.csv, scatter_fit.csv,
// scans.csv, manifest.json and, when kept, coronal/<subject>_<method>_<scan>.pgm.
void write_study(const std::filesystem::path& dir, const StudyOutput& out);

}  // namespace spinescan::study
