#include "spinescan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spinescan/common.hpp"
#include "spinescan/special_functions.hpp"

namespace spinescan::stats {

Anova two_way_anova(const Eigen::MatrixXd& m) {
  const auto n = m.rows(), k = m.cols();
  if (n < 2 || k < 2) throw Error(ErrorCode::InvalidArgument, "rating table needs n >= 2 and k >= 2");
  if (!m.allFinite()) throw Error(ErrorCode::InvalidArgument, "rating table has missing or non-finite cells");
  const double grand = m.mean();
  const Eigen::VectorXd row_means = m.rowwise().mean();
  const Eigen::RowVectorXd col_means = m.colwise().mean();
  Anova a;
  a.ss_total = (m.array() - grand).square().sum();
  a.ss_rows = k * (row_means.array() - grand).square().sum();
  a.ss_cols = n * (col_means.array() - grand).square().sum();
  a.ss_error = std::max(0.0, a.ss_total - a.ss_rows - a.ss_cols);
  a.df_rows = static_cast<int>(n - 1);
  a.df_cols = static_cast<int>(k - 1);
  a.df_error = static_cast<int>((n - 1) * (k - 1));
  a.ms_rows = a.ss_rows / a.df_rows;
  a.ms_cols = a.ss_cols / a.df_cols;
  a.ms_error = a.ss_error / a.df_error;
  return a;
}

std::string_view to_string(RatingKind k) { return k == RatingKind::Single ? "single" : "average"; }

std::string IccResult::model() const {
  return std::string("two-way mixed, absolute agreement, ") + std::string(to_string(kind));
}

IccResult icc_absolute(const RatingTable& table, RatingKind kind, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  const Anova a = two_way_anova(table.values);
  const double n = static_cast<double>(table.values.rows());
  const double k = static_cast<double>(table.values.cols());
  const double msr = a.ms_rows, msc = a.ms_cols, mse = a.ms_error;

  IccResult r;
  r.kind = kind;
  r.anova = a;
  r.n = static_cast<int>(n);
  r.k = static_cast<int>(k);

  // Scale-aware zero test: sums of squares carry rounding noise.
  const double scale = std::max(1.0, table.values.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale * scale * n * k;
  const bool no_error = a.ss_error <= tol && a.ss_cols <= tol;
  if (a.ss_rows <= tol && a.ss_error <= tol)
    throw Error(ErrorCode::Degenerate, "ICC undefined: no between-target or residual variance");
  if (no_error) {
    r.icc = r.ci_low = r.ci_high = 1.0;
    return r;
  }

  const double single = (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n);
  const double average = (msr - mse) / (msr + (msc - mse) / n);

  // Satterthwaite degrees of freedom for the single-rating interval.
  const double ra = k * single / (n * (1.0 - single));
  const double rb = 1.0 + k * single * (n - 1.0) / (n * (1.0 - single));
  const double v = (ra * msc + rb * mse) * (ra * msc + rb * mse) /
                   ((ra * msc) * (ra * msc) / (k - 1.0) + (rb * mse) * (rb * mse) / ((n - 1.0) * (k - 1.0)));
  const double fl = special::f_quantile(1.0 - alpha / 2.0, n - 1.0, v);
  const double fu = special::f_quantile(1.0 - alpha / 2.0, v, n - 1.0);
  const double low = n * (msr - fl * mse) / (fl * (k * msc + (k * n - k - n) * mse) + n * msr);
  const double high = n * (fu * msr - mse) / (k * msc + (k * n - k - n) * mse + n * fu * msr);

  if (kind == RatingKind::Single) {
    r.icc = single;
    r.ci_low = low;
    r.ci_high = high;
  } else {
    auto sb = [k](double x) { return k * x / (1.0 + (k - 1.0) * x); };
    r.icc = average;
    r.ci_low = sb(low);
    r.ci_high = sb(high);
  }
  return r;
}

namespace {

// Midranks of |d|, doubled so ties stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& absd, std::vector<int>& tie_sizes) {
  const auto n = absd.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return absd[a] < absd[b]; });
  std::vector<long> r2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && absd[order[j + 1]] == absd[order[i]]) ++j;
    // ranks i+1 .. j+1 share the midrank (i + j + 2) / 2
    for (std::size_t q = i; q <= j; ++q) r2[order[q]] = static_cast<long>(i + j + 2);
    tie_sizes.push_back(static_cast<int>(j - i + 1));
    i = j + 1;
  }
  return r2;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    const WilcoxonOptions& opt) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "wilcoxon needs paired series of equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite value in wilcoxon input");
    if (v != 0.0) d.push_back(v);
  }
  WilcoxonResult res;
  res.n_used = static_cast<int>(d.size());
  if (d.empty()) {
    if (opt.all_zero_as_p1) return res;
    throw Error(ErrorCode::NoTest, "all paired differences are zero");
  }
  if (d.size() < 5) throw Error(ErrorCode::InvalidArgument, "wilcoxon needs at least 5 non-zero differences");

  std::vector<double> absd(d.size());
  std::transform(d.begin(), d.end(), absd.begin(), [](double v) { return std::abs(v); });
  std::vector<int> ties;
  const auto r2 = doubled_ranks(absd, ties);
  long w2 = 0;  // doubled W+
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) w2 += r2[i];
  res.w_plus = 0.5 * static_cast<double>(w2);
  const int n = res.n_used;

  if (n <= kWilcoxonExactMax) {
    res.exact = true;
    const long total = std::accumulate(r2.begin(), r2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : r2) {
      for (long s = reach; s >= 0; --s)
        if (count[s] != 0.0) count[s + r] += count[s];
      reach += r;
    }
    const double all = std::ldexp(1.0, n);
    double le = 0.0, ge = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s <= w2) le += count[s];
      if (s >= w2) ge += count[s];
    }
    res.p = opt.two_sided ? std::min(1.0, 2.0 * std::min(le, ge) / all) : ge / all;
    return res;
  }

  const double nn = n;
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (int t : ties) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (!(var > 0.0)) throw Error(ErrorCode::Degenerate, "wilcoxon variance vanished");
  const double sd = std::sqrt(var);
  const double diff = res.w_plus - mean;
  if (opt.two_sided) {
    const double z = std::max(0.0, std::abs(diff) - 0.5) / sd;
    res.p = std::min(1.0, 2.0 * (1.0 - special::normal_cdf(z)));
  } else {
    res.p = 1.0 - special::normal_cdf((diff - 0.5) / sd);
  }
  return res;
}

MeanSdMax mean_sd_max(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "summary of an empty series");
  MeanSdMax s;
  s.n = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  s.max = *std::max_element(v.begin(), v.end());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (v.size() - 1));
  }
  return s;
}

double mad(std::span<const double> g) {
  if (g.size() < 2) throw Error(ErrorCode::InvalidArgument, "MAD needs at least two values per group");
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      s += std::abs(g[i] - g[j]);
      ++pairs;
    }
  return s / pairs;
}

std::vector<double> mad_per_group(const std::vector<std::vector<double>>& groups) {
  if (groups.empty()) throw Error(ErrorCode::InvalidArgument, "MAD summary of no groups");
  std::vector<double> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(mad(g));
  return out;
}

MeanSdMax mad_summary(const std::vector<std::vector<double>>& groups) {
  const auto m = mad_per_group(groups);
  return mean_sd_max(m);
}

PctBelow pct_below(std::span<const double> values, double threshold) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "pct_below of an empty series");
  PctBelow p;
  p.total = values.size();
  p.count = static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [&](double v) { return v < threshold; }));
  p.percent = 100.0 * static_cast<double>(p.count) / static_cast<double>(p.total);
  return p;
}

LinReg linreg_r2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "linreg needs equal-length series");
  if (x.size() < 3) throw Error(ErrorCode::InvalidArgument, "linreg needs at least three points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::Degenerate, "linreg: zero variance in x");
  if (!(syy > 0.0)) throw Error(ErrorCode::Degenerate, "linreg: zero variance in y, r2 undefined");
  LinReg r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (r.intercept + r.slope * x[i]);
    ss_res += e * e;
  }
  r.r2 = 1.0 - ss_res / syy;
  return r;
}

SdSem sd_sem_summary(const std::vector<std::vector<double>>& groups) {
  if (groups.empty()) throw Error(ErrorCode::InvalidArgument, "SD/SEM summary of no groups");
  std::vector<double> sds, sems;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error(ErrorCode::InvalidArgument, "SD needs at least two values per group");
    const auto s = mean_sd_max(g);
    sds.push_back(s.sd);
    sems.push_back(s.sd / std::sqrt(static_cast<double>(g.size())));
  }
  return {mean_sd_max(sds), mean_sd_max(sems)};
}

}  // namespace spinescan::stats
