#include "spinescan/common.hpp"

#ifndef SPINESCAN_VERSION
#define SPINESCAN_VERSION "unknown"
#endif

namespace spinescan {

std::string_view version() { return SPINESCAN_VERSION; }

std::string_view to_string(Region r) {
  switch (r) {
    case Region::Sacrum: return "sacrum";
    case Region::Lumbar: return "lumbar";
    case Region::Thoracic: return "thoracic";
  }
  return "unknown";
}

Region region_from_string(std::string_view s) {
  if (s == "sacrum") return Region::Sacrum;
  if (s == "lumbar") return Region::Lumbar;
  if (s == "thoracic") return Region::Thoracic;
  throw Error(ErrorCode::InvalidArgument, "unknown region '" + std::string(s) + "'");
}

std::string_view to_string(Side s) { return s == Side::Left ? "left" : "right"; }

Side side_from_string(std::string_view s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw Error(ErrorCode::InvalidArgument, "unknown direction '" + std::string(s) + "'");
}

std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::InfeasibleConfig: return "infeasible_config";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::NoTest: return "no_test";
    case ErrorCode::ExtractionFailed: return "extraction_failed";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace spinescan
