#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinescan/io.hpp"
#include "spinescan/stats.hpp"

namespace spinescan::report {

// Share of curves with MAD below 5 degrees under both readings of a reduced
// count: over the curves actually analyzed, and over every curve in the
// table with unanalyzed curves counted as not below.
struct BelowBoth {
  stats::PctBelow analyzed;
  stats::PctBelow all_curves;
};

struct IntraRater {
  std::string method;
  std::string rater;
  int n_total = 0;
  std::optional<stats::IccResult> icc;  // single rating
  std::optional<stats::MeanSdMax> mad;
  std::optional<BelowBoth> below_5;
  std::optional<stats::SdSem> sd_sem;
  std::string gap;  // why the row is incomplete, empty otherwise
};

struct InterRater {
  std::string method;
  std::string rater_a;
  std::string rater_b;
  int n_total = 0;
  std::optional<stats::IccResult> icc;  // average rating, on per-curve means
  std::optional<stats::MeanSdMax> mad;
  std::optional<BelowBoth> below_5;
  std::optional<stats::SdSem> sd_sem;
  std::string gap;
};

struct InterMethod {
  std::string rater;
  std::string method_a;  // x of the regression
  std::string method_b;  // y of the regression
  int n_total = 0;
  std::optional<stats::MeanSdMax> mad;
  std::optional<BelowBoth> below_5;
  std::optional<stats::WilcoxonResult> wilcoxon;
  std::optional<stats::LinReg> fit;
  std::string gap;
};

struct ScatterPoint {
  std::string subject_id;
  int curve_id = 0;
  double x = 0.0;  // first method, mean over raters and scans
  double y = 0.0;  // second method
};

struct StatsReport {
  std::vector<std::string> methods;
  std::vector<std::string> raters;
  std::vector<IntraRater> intra;
  std::vector<InterRater> inter_rater;
  std::vector<InterMethod> inter_method;
  std::vector<ScatterPoint> scatter;
  std::optional<stats::LinReg> scatter_fit;
  std::string scatter_gap;
};

// Runs the full analysis on a long-format rating table. Rows with rater
// "auto" are ignored. Methods are ordered robotic, manual, then any others
// alphabetically; raters alphabetically. Each analysis uses only curves that
// are complete for it (listwise exclusion); failures become gaps, never
// exceptions. An empty table is an error.
StatsReport analyze(const std::vector<io::RatingRecord>& rows);

nlohmann::json to_json(const StatsReport& r);

// Three Markdown tables: intra-rater, inter-method and inter-rater.
std::string render_markdown(const StatsReport& r);

// One row per analyzed curve with the fitted value of the regression line.
std::string scatter_csv(const StatsReport& r);
// Single-row CSV with slope, intercept, r2 and n of that line.
std::string scatter_fit_csv(const StatsReport& r);

}  // namespace spinescan::report
