#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner. They are deliberately naive: explicit loops, no shared
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

using Table = std::vector<std::vector<double>>;  // [row][column]

struct IccPair {
  double single;
  double average;
};

// Two-way ANOVA by direct summation, then the absolute-agreement ICC for one
// rating and for the mean of k ratings.
inline IccPair icc_absolute(const Table& t) {
  const std::size_t n = t.size(), k = t.front().size();
  double grand = 0.0;
  for (const auto& row : t)
    for (double v : row) grand += v;
  grand /= static_cast<double>(n * k);

  double ss_rows = 0.0;
  for (const auto& row : t) {
    double m = 0.0;
    for (double v : row) m += v;
    m /= static_cast<double>(k);
    ss_rows += static_cast<double>(k) * (m - grand) * (m - grand);
  }
  double ss_cols = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += t[i][j];
    m /= static_cast<double>(n);
    ss_cols += static_cast<double>(n) * (m - grand) * (m - grand);
  }
  double ss_total = 0.0;
  for (const auto& row : t)
    for (double v : row) ss_total += (v - grand) * (v - grand);
  const double ss_err = ss_total - ss_rows - ss_cols;

  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  const double msr = ss_rows / (dn - 1.0);
  const double msc = ss_cols / (dk - 1.0);
  const double mse = ss_err / ((dn - 1.0) * (dk - 1.0));
  return {(msr - mse) / (msr + (dk - 1.0) * mse + dk * (msc - mse) / dn),
          (msr - mse) / (msr + (msc - mse) / dn)};
}

// Average ranks of |d| with ties, as plain doubles.
inline std::vector<double> midranks(const std::vector<double>& a) {
  const std::size_t n = a.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a[j] < a[i]) less += 1.0;
      if (a[j] == a[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

// Exact two-sided signed-rank p by visiting all 2^n sign assignments of the
// observed ranks. Zero differences are dropped first.
inline double wilcoxon_enumerate(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  std::vector<double> absd;
  for (double v : d) absd.push_back(std::abs(v));
  const auto r = midranks(absd);
  double w = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) w += r[i];

  const std::uint64_t all = std::uint64_t{1} << d.size();
  double le = 0.0, ge = 0.0;
  for (std::uint64_t mask = 0; mask < all; ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (mask >> i & 1U) s += r[i];
    // Ranks are multiples of 0.5, so the comparison is exact.
    if (s <= w) le += 1.0;
    if (s >= w) ge += 1.0;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(all));
}

}  // namespace oracle
