#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace spinescan::stats {

// n targets (rows) by k measurements (columns), complete.
struct RatingTable {
  Eigen::MatrixXd values;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
};

struct Anova {
  double ss_rows = 0.0, ss_cols = 0.0, ss_error = 0.0, ss_total = 0.0;
  double ms_rows = 0.0, ms_cols = 0.0, ms_error = 0.0;
  int df_rows = 0, df_cols = 0, df_error = 0;
};

Anova two_way_anova(const Eigen::MatrixXd& m);

enum class RatingKind { Single, Average };
std::string_view to_string(RatingKind k);

struct IccResult {
  double icc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  RatingKind kind = RatingKind::Single;
  Anova anova;
  int n = 0;
  int k = 0;

  std::string model() const;
};

// Two-way, absolute-agreement ICC (McGraw and Wong forms A,1 and A,k) with
// an F-based confidence interval. The average-rating interval is the
// Spearman-Brown image of the single-rating interval.
IccResult icc_absolute(const RatingTable& table, RatingKind kind, double alpha = 0.05);

struct WilcoxonOptions {
  bool two_sided = true;
  bool all_zero_as_p1 = false;  // otherwise all-zero differences throw
};

struct WilcoxonResult {
  double p = 1.0;
  double w_plus = 0.0;
  int n_used = 0;
  bool exact = false;
};

inline constexpr int kWilcoxonExactMax = 25;

// Zeros are dropped; ties get midranks. Exact null distribution for
// n <= 25, otherwise normal approximation with tie and continuity
// corrections. The one-sided alternative is x > y.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    const WilcoxonOptions& opt = {});

struct MeanSdMax {
  double mean = 0.0;
  double sd = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

MeanSdMax mean_sd_max(std::span<const double> v);

// Mean absolute pairwise difference of one group.
double mad(std::span<const double> group);
std::vector<double> mad_per_group(const std::vector<std::vector<double>>& groups);
MeanSdMax mad_summary(const std::vector<std::vector<double>>& groups);

struct PctBelow {
  double percent = 0.0;
  std::size_t count = 0;
  std::size_t total = 0;
};

PctBelow pct_below(std::span<const double> values, double threshold = 5.0);

struct LinReg {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinReg linreg_r2(std::span<const double> x, std::span<const double> y);

struct SdSem {
  MeanSdMax sd;
  MeanSdMax sem;
};

SdSem sd_sem_summary(const std::vector<std::vector<double>>& groups);

}  // namespace spinescan::stats
