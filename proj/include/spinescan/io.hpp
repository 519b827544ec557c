#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinescan/bmode.hpp"
#include "spinescan/controller.hpp"
#include "spinescan/detector.hpp"
#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"
#include "spinescan/spa.hpp"

// JSON conversions. Reading is lenient about missing keys (they keep their
// defaults) and strict about types.
namespace spinescan::phantom {
void to_json(nlohmann::json& j, const CurveSpec& c);
void from_json(const nlohmann::json& j, CurveSpec& c);
void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);
void to_json(nlohmann::json& j, const Posture& p);
void from_json(const nlohmann::json& j, Posture& p);
void to_json(nlohmann::json& j, const CurveAngle& c);
}  // namespace spinescan::phantom

namespace spinescan::bmode {
void to_json(nlohmann::json& j, const ImagingConfig& c);
void from_json(const nlohmann::json& j, ImagingConfig& c);
}  // namespace spinescan::bmode

namespace spinescan::detector {
void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);
void to_json(nlohmann::json& j, const DetectorNoise& c);
void from_json(const nlohmann::json& j, DetectorNoise& c);
}  // namespace spinescan::detector

namespace spinescan::controller {
void to_json(nlohmann::json& j, const FaultEvent& f);
void from_json(const nlohmann::json& j, FaultEvent& f);
void to_json(nlohmann::json& j, const ScanConfig& c);
void from_json(const nlohmann::json& j, ScanConfig& c);
}  // namespace spinescan::controller

namespace spinescan::spa {
void to_json(nlohmann::json& j, const RaterModel& r);
void from_json(const nlohmann::json& j, RaterModel& r);
void to_json(nlohmann::json& j, const ExtractConfig& c);
void from_json(const nlohmann::json& j, ExtractConfig& c);
void to_json(nlohmann::json& j, const MeasureConfig& c);
void from_json(const nlohmann::json& j, MeasureConfig& c);
}  // namespace spinescan::spa

namespace spinescan::recon {
void to_json(nlohmann::json& j, const SliceDepths& d);
void from_json(const nlohmann::json& j, SliceDepths& d);
}  // namespace spinescan::recon

namespace spinescan::io {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& p);
// Pretty-printed with a trailing newline; key order is stable.
void write_json(const fs::path& p, const nlohmann::json& j);
void write_text(const fs::path& p, const std::string& s);
std::string read_text(const fs::path& p);

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const fs::path& p, int width, int height, const std::vector<std::uint8_t>& pixels);
Gray8 read_pgm(const fs::path& p);

// Phantom document: config, posture, ground truth and the world centerline
// sampled every 1 mm.
nlohmann::json phantom_document(const phantom::SpinePhantom& ph);
phantom::SpinePhantom phantom_from_document(const nlohmann::json& doc);

// Recording directory: frame_NNNNN.pgm, poses.csv and recording.json.
void write_recording(const fs::path& dir, const bmode::ScanRecording& rec);
bmode::ScanRecording read_recording(const fs::path& dir);
std::string recording_hash(const bmode::ScanRecording& rec);

void write_detections_csv(const fs::path& p, const nlohmann::json& detections);

// Coronal image as PGM (0 = no data, 1..255 = intensity 0..1) plus a JSON
// sidecar next to it with the same stem.
void write_coronal(const fs::path& pgm, const recon::CoronalImage& img, const std::string& source_hash);
recon::CoronalImage read_coronal(const fs::path& pgm);
nlohmann::json coronal_sidecar(const recon::CoronalImage& img, const std::string& source_hash);

// One row of the long-format rating table.
struct RatingRecord {
  std::string subject_id;
  int curve_id = 0;
  std::string method;  // robotic | manual
  int scan_idx = 0;
  std::string rater;   // R1, R2, ... or auto
  std::optional<double> angle_deg;
  int slice_index = 0;
  std::string flags;   // ';'-separated
};

inline constexpr const char* kRatingHeader = "subject_id,curve_id,method,scan_idx,rater,angle_deg,slice_index,flags";

std::string ratings_csv(const std::vector<RatingRecord>& rows);
std::vector<RatingRecord> parse_ratings_csv(const std::string& text);
void write_ratings_csv(const fs::path& p, const std::vector<RatingRecord>& rows);
std::vector<RatingRecord> read_ratings_csv(const fs::path& p);

// Fixed-precision decimal formatting used by every text output, so files do
// not depend on stream state.
std::string fmt(double v, int digits = 4);

}  // namespace spinescan::io
