#include "spinescan/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "spinescan/common.hpp"

namespace spinescan::report {
namespace {

using nlohmann::json;
using io::fmt;

struct CurveKey {
  std::string subject;
  int curve;
  auto operator<=>(const CurveKey&) const = default;
};

// Angles indexed as [curve][method][rater][scan].
struct Cube {
  std::vector<CurveKey> curves;
  std::vector<std::string> methods;
  std::vector<std::string> raters;
  std::map<std::string, std::vector<int>> scans;  // per method, sorted
  std::map<std::tuple<int, std::string, std::string, int>, double> values;

  std::optional<double> get(int c, const std::string& m, const std::string& r, int s) const {
    const auto it = values.find({c, m, r, s});
    if (it == values.end()) return std::nullopt;
    return it->second;
  }

  // All scans of one method by one rater, or nothing if any is missing.
  std::optional<std::vector<double>> series(int c, const std::string& m, const std::string& r) const {
    std::vector<double> v;
    for (int s : scans.at(m)) {
      const auto a = get(c, m, r, s);
      if (!a) return std::nullopt;
      v.push_back(*a);
    }
    return v;
  }

  std::optional<double> mean(int c, const std::string& m, const std::string& r) const {
    const auto v = series(c, m, r);
    if (!v || v->empty()) return std::nullopt;
    double s = 0.0;
    for (double x : *v) s += x;
    return s / static_cast<double>(v->size());
  }
};

Cube build_cube(const std::vector<io::RatingRecord>& rows) {
  Cube cube;
  std::set<CurveKey> curves;
  std::set<std::string> methods, raters;
  std::map<std::string, std::set<int>> scans;
  for (const auto& r : rows) {
    curves.insert({r.subject_id, r.curve_id});
    if (r.rater == "auto") continue;
    methods.insert(r.method);
    raters.insert(r.rater);
    scans[r.method].insert(r.scan_idx);
  }
  cube.curves.assign(curves.begin(), curves.end());
  for (const char* m : {"robotic", "manual"})
    if (methods.erase(m)) cube.methods.emplace_back(m);
  cube.methods.insert(cube.methods.end(), methods.begin(), methods.end());
  cube.raters.assign(raters.begin(), raters.end());
  for (const auto& [m, s] : scans) cube.scans[m].assign(s.begin(), s.end());
  std::map<CurveKey, int> index;
  for (std::size_t i = 0; i < cube.curves.size(); ++i) index[cube.curves[i]] = static_cast<int>(i);
  for (const auto& r : rows) {
    if (r.rater == "auto" || !r.angle_deg) continue;
    const auto key = std::make_tuple(index.at({r.subject_id, r.curve_id}), r.method, r.rater, r.scan_idx);
    if (!cube.values.emplace(key, *r.angle_deg).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate rating for " + r.subject_id + " curve " +
                                                  std::to_string(r.curve_id) + " " + r.method + " scan " +
                                                  std::to_string(r.scan_idx) + " rater " + r.rater);
  }
  return cube;
}

void add_gap(std::string& gap, const std::string& what) {
  if (!gap.empty()) gap += "; ";
  gap += what;
}

BelowBoth below_both(const std::vector<double>& mads, int n_total) {
  BelowBoth b;
  b.analyzed = stats::pct_below(mads, 5.0);
  b.all_curves.count = b.analyzed.count;
  b.all_curves.total = static_cast<std::size_t>(n_total);
  b.all_curves.percent = n_total > 0 ? 100.0 * static_cast<double>(b.analyzed.count) / n_total : 0.0;
  return b;
}

std::optional<stats::IccResult> try_icc(const stats::RatingTable& t, stats::RatingKind kind, std::string& gap) {
  try {
    return stats::icc_absolute(t, kind);
  } catch (const Error& e) {
    add_gap(gap, std::string("ICC: ") + e.what());
    return std::nullopt;
  }
}

IntraRater intra(const Cube& cube, const std::string& m, const std::string& r) {
  IntraRater row;
  row.method = m;
  row.rater = r;
  row.n_total = static_cast<int>(cube.curves.size());
  std::vector<std::vector<double>> groups;
  for (std::size_t c = 0; c < cube.curves.size(); ++c)
    if (auto v = cube.series(static_cast<int>(c), m, r)) groups.push_back(std::move(*v));
  const int k = static_cast<int>(cube.scans.at(m).size());
  if (groups.size() < 2 || k < 2) {
    add_gap(row.gap, "fewer than two complete curves or scans (" + std::to_string(groups.size()) + " curves, " +
                         std::to_string(k) + " scans)");
    return row;
  }
  stats::RatingTable t;
  t.values.resize(static_cast<Eigen::Index>(groups.size()), k);
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (int j = 0; j < k; ++j) t.values(static_cast<Eigen::Index>(i), j) = groups[i][static_cast<std::size_t>(j)];
  row.icc = try_icc(t, stats::RatingKind::Single, row.gap);
  const auto mads = stats::mad_per_group(groups);
  row.mad = stats::mean_sd_max(mads);
  row.below_5 = below_both(mads, row.n_total);
  row.sd_sem = stats::sd_sem_summary(groups);
  return row;
}

InterRater inter_rater(const Cube& cube, const std::string& m, const std::string& a, const std::string& b) {
  InterRater row;
  row.method = m;
  row.rater_a = a;
  row.rater_b = b;
  row.n_total = static_cast<int>(cube.curves.size());
  std::vector<std::vector<double>> pairs;
  for (std::size_t c = 0; c < cube.curves.size(); ++c) {
    const auto ma = cube.mean(static_cast<int>(c), m, a), mb = cube.mean(static_cast<int>(c), m, b);
    if (ma && mb) pairs.push_back({*ma, *mb});
  }
  if (pairs.size() < 2) {
    add_gap(row.gap, "fewer than two curves complete for both raters");
    return row;
  }
  stats::RatingTable t;
  t.values.resize(static_cast<Eigen::Index>(pairs.size()), 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    t.values(static_cast<Eigen::Index>(i), 0) = pairs[i][0];
    t.values(static_cast<Eigen::Index>(i), 1) = pairs[i][1];
  }
  row.icc = try_icc(t, stats::RatingKind::Average, row.gap);
  const auto mads = stats::mad_per_group(pairs);
  row.mad = stats::mean_sd_max(mads);
  row.below_5 = below_both(mads, row.n_total);
  row.sd_sem = stats::sd_sem_summary(pairs);
  return row;
}

InterMethod inter_method(const Cube& cube, const std::string& r, const std::string& ma, const std::string& mb) {
  InterMethod row;
  row.rater = r;
  row.method_a = ma;
  row.method_b = mb;
  row.n_total = static_cast<int>(cube.curves.size());
  std::vector<double> xa, xb, mads;
  for (std::size_t c = 0; c < cube.curves.size(); ++c) {
    const auto a = cube.mean(static_cast<int>(c), ma, r), b = cube.mean(static_cast<int>(c), mb, r);
    if (!a || !b) continue;
    xa.push_back(*a);
    xb.push_back(*b);
    mads.push_back(std::abs(*a - *b));
  }
  if (xa.size() < 2) {
    add_gap(row.gap, "fewer than two curves complete for both methods");
    return row;
  }
  row.mad = stats::mean_sd_max(mads);
  row.below_5 = below_both(mads, row.n_total);
  try {
    row.wilcoxon = stats::wilcoxon_signed_rank(xa, xb);
  } catch (const Error& e) {
    add_gap(row.gap, std::string("Wilcoxon: ") + e.what());
  }
  try {
    row.fit = stats::linreg_r2(xa, xb);
  } catch (const Error& e) {
    add_gap(row.gap, std::string("regression: ") + e.what());
  }
  return row;
}

json icc_json(const std::optional<stats::IccResult>& r) {
  if (!r) return nullptr;
  const auto& a = r->anova;
  return {{"icc", r->icc},
          {"ci_low", r->ci_low},
          {"ci_high", r->ci_high},
          {"model", r->model()},
          {"n", r->n},
          {"k", r->k},
          {"anova",
           {{"ms_rows", a.ms_rows},
            {"ms_cols", a.ms_cols},
            {"ms_error", a.ms_error},
            {"df_rows", a.df_rows},
            {"df_cols", a.df_cols},
            {"df_error", a.df_error}}}};
}

json msm_json(const std::optional<stats::MeanSdMax>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"sd", s->sd}, {"max", s->max}, {"n", s->n}};
}

json below_json(const std::optional<BelowBoth>& b) {
  if (!b) return nullptr;
  auto one = [](const stats::PctBelow& p) {
    return json{{"percent", p.percent}, {"count", p.count}, {"total", p.total}};
  };
  return {{"of_analyzed", one(b->analyzed)}, {"of_all_curves", one(b->all_curves)}};
}

json sdsem_json(const std::optional<stats::SdSem>& s) {
  if (!s) return nullptr;
  return {{"sd", msm_json(s->sd)}, {"sem", msm_json(s->sem)}};
}

json fit_json(const std::optional<stats::LinReg>& f) {
  if (!f) return nullptr;
  return {{"slope", f->slope}, {"intercept", f->intercept}, {"r2", f->r2}};
}

// Display helpers for the Markdown tables.
constexpr const char* kNa = "n/a";

std::string icc_cell(const std::optional<stats::IccResult>& r) {
  if (!r) return kNa;
  return fmt(r->icc, 3) + " (" + fmt(r->ci_low, 3) + "-" + fmt(r->ci_high, 3) + ")";
}

std::string msm_cell(const std::optional<stats::MeanSdMax>& s) {
  if (!s) return kNa;
  return fmt(s->mean, 1) + "±" + fmt(s->sd, 1) + " (" + fmt(s->max, 1) + ")";
}

std::string pct_cell(const stats::PctBelow& p) {
  return fmt(p.percent, 1) + " (" + std::to_string(p.count) + "/" + std::to_string(p.total) + ")";
}

std::string row_line(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

std::string header(const std::vector<std::string>& cells) {
  std::string s = row_line(cells) + "|";
  for (std::size_t i = 0; i < cells.size(); ++i) s += "---|";
  return s + "\n";
}

}  // namespace

StatsReport analyze(const std::vector<io::RatingRecord>& rows) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "rating table is empty");
  const Cube cube = build_cube(rows);
  StatsReport rep;
  rep.methods = cube.methods;
  rep.raters = cube.raters;
  if (cube.raters.empty()) throw Error(ErrorCode::InvalidArgument, "rating table has no rater rows");

  for (const auto& m : cube.methods)
    for (const auto& r : cube.raters) rep.intra.push_back(intra(cube, m, r));

  for (const auto& m : cube.methods)
    for (std::size_t a = 0; a < cube.raters.size(); ++a)
      for (std::size_t b = a + 1; b < cube.raters.size(); ++b)
        rep.inter_rater.push_back(inter_rater(cube, m, cube.raters[a], cube.raters[b]));

  if (cube.methods.size() >= 2) {
    const auto& ma = cube.methods[0];
    const auto& mb = cube.methods[1];
    for (const auto& r : cube.raters) rep.inter_method.push_back(inter_method(cube, r, ma, mb));

    std::vector<double> xs, ys;
    for (std::size_t c = 0; c < cube.curves.size(); ++c) {
      double sx = 0.0, sy = 0.0;
      bool ok = true;
      for (const auto& r : cube.raters) {
        const auto a = cube.mean(static_cast<int>(c), ma, r), b = cube.mean(static_cast<int>(c), mb, r);
        if (!a || !b) {
          ok = false;
          break;
        }
        sx += *a;
        sy += *b;
      }
      if (!ok) continue;
      const double nr = static_cast<double>(cube.raters.size());
      rep.scatter.push_back({cube.curves[c].subject, cube.curves[c].curve, sx / nr, sy / nr});
      xs.push_back(sx / nr);
      ys.push_back(sy / nr);
    }
    try {
      rep.scatter_fit = stats::linreg_r2(xs, ys);
    } catch (const Error& e) {
      rep.scatter_gap = e.what();
    }
  } else {
    rep.scatter_gap = "inter-method analysis needs two methods";
  }
  return rep;
}

json to_json(const StatsReport& r) {
  json intra_j = json::array(), rater_j = json::array(), method_j = json::array(), scatter_j = json::array();
  for (const auto& x : r.intra)
    intra_j.push_back({{"method", x.method},
                       {"rater", x.rater},
                       {"n_total", x.n_total},
                       {"icc", icc_json(x.icc)},
                       {"mad", msm_json(x.mad)},
                       {"below_5", below_json(x.below_5)},
                       {"sd_sem", sdsem_json(x.sd_sem)},
                       {"gap", x.gap}});
  for (const auto& x : r.inter_rater)
    rater_j.push_back({{"method", x.method},
                       {"raters", {x.rater_a, x.rater_b}},
                       {"n_total", x.n_total},
                       {"icc", icc_json(x.icc)},
                       {"mad", msm_json(x.mad)},
                       {"below_5", below_json(x.below_5)},
                       {"sd_sem", sdsem_json(x.sd_sem)},
                       {"gap", x.gap}});
  for (const auto& x : r.inter_method) {
    json w = nullptr;
    if (x.wilcoxon)
      w = {{"p", x.wilcoxon->p}, {"w_plus", x.wilcoxon->w_plus}, {"n_used", x.wilcoxon->n_used},
           {"exact", x.wilcoxon->exact}};
    method_j.push_back({{"rater", x.rater},
                        {"methods", {x.method_a, x.method_b}},
                        {"n_total", x.n_total},
                        {"mad", msm_json(x.mad)},
                        {"below_5", below_json(x.below_5)},
                        {"wilcoxon", w},
                        {"fit", fit_json(x.fit)},
                        {"gap", x.gap}});
  }
  for (const auto& p : r.scatter)
    scatter_j.push_back({{"subject_id", p.subject_id}, {"curve_id", p.curve_id}, {"x", p.x}, {"y", p.y}});
  return {{"methods", r.methods},
          {"raters", r.raters},
          {"intra_rater", intra_j},
          {"inter_rater", rater_j},
          {"inter_method", method_j},
          {"scatter", {{"points", scatter_j}, {"fit", fit_json(r.scatter_fit)}, {"gap", r.scatter_gap}}}};
}

std::string render_markdown(const StatsReport& r) {
  std::string md = "# Reliability report\n\n";
  std::string gaps;
  auto note = [&gaps](const std::string& where, const std::string& gap) {
    if (!gap.empty()) gaps += "- " + where + ": " + gap + "\n";
  };

  md += "## Intra-rater reliability\n\n";
  md += "ICC: two-way mixed, absolute agreement, single rating. MAD, SD and SEM per curve over the repeated scans.\n\n";
  md += header({"Method", "Rater", "ICC (95% CI)", "MAD (max), °", "% below 5° (analyzed)", "% below 5° (all curves)",
                "SD (max), °", "SEM (max), °"});
  for (const auto& x : r.intra) {
    md += row_line({x.method, x.rater, icc_cell(x.icc), msm_cell(x.mad),
                    x.below_5 ? pct_cell(x.below_5->analyzed) : kNa, x.below_5 ? pct_cell(x.below_5->all_curves) : kNa,
                    x.sd_sem ? msm_cell(x.sd_sem->sd) : kNa, x.sd_sem ? msm_cell(x.sd_sem->sem) : kNa});
    note("intra-rater " + x.method + " " + x.rater, x.gap);
  }

  md += "\n## Inter-method comparison\n\nOn per-curve means of the repeated scans of each method.\n\n";
  md += header({"Rater", "Methods", "MAD (max), °", "% below 5° (analyzed)", "% below 5° (all curves)",
                "Wilcoxon p", "R²"});
  for (const auto& x : r.inter_method) {
    md += row_line({x.rater, x.method_a + " vs " + x.method_b, msm_cell(x.mad),
                    x.below_5 ? pct_cell(x.below_5->analyzed) : kNa, x.below_5 ? pct_cell(x.below_5->all_curves) : kNa,
                    x.wilcoxon ? fmt(x.wilcoxon->p, 3) : kNa, x.fit ? fmt(x.fit->r2, 2) : kNa});
    note("inter-method " + x.rater, x.gap);
  }
  if (r.inter_method.empty()) note("inter-method", "needs two methods");

  md += "\n## Inter-rater reliability\n\n";
  md += "ICC: two-way mixed, absolute agreement, average rating, on per-curve means of the repeated scans.\n\n";
  md += header({"Method", "Raters", "ICC (95% CI)", "MAD (max), °", "% below 5° (analyzed)",
                "% below 5° (all curves)", "SD (max), °", "SEM (max), °"});
  for (const auto& x : r.inter_rater) {
    md += row_line({x.method, x.rater_a + " vs " + x.rater_b, icc_cell(x.icc), msm_cell(x.mad),
                    x.below_5 ? pct_cell(x.below_5->analyzed) : kNa, x.below_5 ? pct_cell(x.below_5->all_curves) : kNa,
                    x.sd_sem ? msm_cell(x.sd_sem->sd) : kNa, x.sd_sem ? msm_cell(x.sd_sem->sem) : kNa});
    note("inter-rater " + x.method, x.gap);
  }
  if (r.inter_rater.empty()) note("inter-rater", "needs two raters");

  md += "\n## Method correlation\n\n";
  if (r.scatter_fit) {
    md += "Mean over raters, " + std::to_string(r.scatter.size()) + " curves: y = " + fmt(r.scatter_fit->slope, 3) +
          " x + " + fmt(r.scatter_fit->intercept, 3) + ", R² = " + fmt(r.scatter_fit->r2, 3) +
          ". Points in scatter.csv.\n";
  } else {
    note("method correlation", r.scatter_gap);
    md += "Not available.\n";
  }

  md += "\n\"% below 5° (analyzed)\" counts over the curves each analysis could use; \"(all curves)\" counts "
        "unanalyzed curves as not below.\n";
  if (!gaps.empty()) md += "\n## Gaps\n\n" + gaps;
  return md;
}

std::string scatter_csv(const StatsReport& r) {
  const std::string xa = r.methods.size() > 0 ? r.methods[0] : "x";
  const std::string ya = r.methods.size() > 1 ? r.methods[1] : "y";
  std::string s = "subject_id,curve_id," + xa + "_mean," + ya + "_mean,fitted\n";
  for (const auto& p : r.scatter) {
    s += p.subject_id + "," + std::to_string(p.curve_id) + "," + fmt(p.x) + "," + fmt(p.y) + ",";
    if (r.scatter_fit) s += fmt(r.scatter_fit->intercept + r.scatter_fit->slope * p.x);
    s += "\n";
  }
  return s;
}

std::string scatter_fit_csv(const StatsReport& r) {
  std::string s = "slope,intercept,r2,n\n";
  if (r.scatter_fit)
    s += fmt(r.scatter_fit->slope, 6) + "," + fmt(r.scatter_fit->intercept, 6) + "," + fmt(r.scatter_fit->r2, 6) + "," +
         std::to_string(r.scatter.size()) + "\n";
  return s;
}

}  // namespace spinescan::report
