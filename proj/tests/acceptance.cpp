// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance            all criteria
//   acceptance 2 3        selected criteria
//   acceptance --seeds 4  fewer study seeds for criterion 4 (not a pass run)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "spinescan/controller.hpp"
#include "spinescan/io.hpp"
#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"
#include "spinescan/spa.hpp"
#include "spinescan/stats.hpp"
#include "spinescan/study.hpp"

namespace fs = std::filesystem;
using namespace spinescan;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

phantom::SpinePhantom single_curve(double apex, double angle, double compliance = 0.0, double scapula_gap = 0.0) {
  phantom::PhantomConfig pc;
  pc.curves = {{apex, angle, Side::Right, 0.0}};
  pc.torso_compliance_deg_per_n = compliance;
  pc.scapula_gap_mm = scapula_gap;
  return phantom::build_phantom(pc);
}

// Best of the nine slices by ridge contrast.
recon::CoronalImage best_slice(const bmode::ScanRecording& rec, const recon::Volume* vol) {
  const auto skin = recon::SkinMap::from_recording(rec);
  const recon::SliceDepths sd;
  std::optional<recon::CoronalImage> best;
  double best_rc = 0.0;
  for (int k = 1; k <= sd.count; ++k) {
    try {
      auto img = vol ? recon::vpi_volume(*vol, skin, sd.depth(k), sd.band_mm)
                     : recon::vpi_direct(rec, skin, sd.depth(k), sd.band_mm);
      img.slice_index = k;
      const double rc = spa::ridge_contrast(img);
      if (!best || rc > best_rc) {
        best_rc = rc;
        best = std::move(img);
      }
    } catch (const Error&) {
    }
  }
  if (!best) throw Error(ErrorCode::ExtractionFailed, "no usable slice");
  return *best;
}

// ---------------------------------------------------------------------------
// 1. Noiseless scan, compound, project, extract, measure.

Outcome criterion_1() {
  Outcome o;
  for (double target : {7.0, 20.0, 31.0}) {
    const auto t0 = clk::now();
    const auto ph = single_curve(11.0, target);
    const auto rec = controller::run_scan(ph, controller::ScanConfig{}, bmode::ImagingConfig{});
    const auto vol = recon::compound(rec, 0.5);
    const auto img = best_slice(rec, &vol);
    const auto path = spa::extract_path(img);
    const auto measured = spa::measure_spa(path, spa::MeasureConfig{.max_curves = 4});
    const auto match = study::match_curves(ph.ground_truth(), measured, 60.0);
    const double secs = seconds_since(t0);
    const double truth = ph.ground_truth().front().angle_deg;
    if (!match.front()) {
      o.check(false, num(target, 0) + "deg: no curve found");
      continue;
    }
    const double got = measured[*match.front()].angle_deg;
    o.check(std::abs(got - truth) <= 1.5 && secs < 60.0,
            num(target, 0) + "deg: truth " + num(truth) + " measured " + num(got) + " in " + num(secs, 1) + "s");
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. ICC against the brute-force ANOVA oracle.

Outcome criterion_2() {
  Outcome o;
  std::mt19937_64 rng(20240515);
  std::uniform_int_distribution<int> n_dist(4, 30), k_dist(2, 5);
  std::normal_distribution<double> subject(15.0, 6.0), noise(0.0, 2.0), shift(0.0, 1.5);
  double worst = 0.0;
  int tables = 0;
  for (; tables < 200; ++tables) {
    const int n = n_dist(rng), k = k_dist(rng);
    std::vector<double> col_shift(k);
    for (auto& s : col_shift) s = shift(rng);
    oracle::Table t(n, std::vector<double>(k));
    stats::RatingTable rt;
    rt.values.resize(n, k);
    for (int i = 0; i < n; ++i) {
      const double s = subject(rng);
      for (int j = 0; j < k; ++j) rt.values(i, j) = t[i][j] = s + col_shift[j] + noise(rng);
    }
    const auto ref = oracle::icc_absolute(t);
    worst = std::max(worst, std::abs(stats::icc_absolute(rt, stats::RatingKind::Single).icc - ref.single));
    worst = std::max(worst, std::abs(stats::icc_absolute(rt, stats::RatingKind::Average).icc - ref.average));
  }
  o.check(worst <= 1e-9, std::to_string(tables) + " tables, max |diff| " + sci(worst));

  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = n_dist(rng), k = k_dist(rng);
    stats::RatingTable rt;
    rt.values.resize(n, k);
    for (int i = 0; i < n; ++i) rt.values.row(i).setConstant(subject(rng));
    exact = exact && stats::icc_absolute(rt, stats::RatingKind::Single).icc == 1.0 &&
            stats::icc_absolute(rt, stats::RatingKind::Average).icc == 1.0;
  }
  o.check(exact, "perfect agreement gives exactly 1.0");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Wilcoxon exact p against enumeration.

Outcome criterion_3() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> coarse(-6, 6);
  std::normal_distribution<double> fine(0.0, 3.0);
  double worst = 0.0;
  int cases = 0;
  for (int n = 5; n <= 12; ++n) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> x(n), y(n, 0.0);
      // Half the cases use small integers so ties and zeros occur.
      for (auto& v : x) v = trial % 2 ? coarse(rng) : fine(rng);
      std::size_t nonzero = std::count_if(x.begin(), x.end(), [](double v) { return v != 0.0; });
      if (nonzero < 5) continue;
      const double p = stats::wilcoxon_signed_rank(x, y).p;
      worst = std::max(worst, std::abs(p - oracle::wilcoxon_enumerate(x, y)));
      ++cases;
    }
  }
  o.check(worst <= 1e-12, std::to_string(cases) + " inputs with n <= 12, max |diff| " + sci(worst));
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0}, y(5, 0.0);
  const double p5 = stats::wilcoxon_signed_rank(x, y).p;
  o.check(p5 == 0.0625, "n=5 all positive p " + num(p5, 4));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Study regime over many master seeds.

Outcome criterion_4(int n_seeds) {
  Outcome o;
  const auto t0 = clk::now();
  std::map<std::string, std::vector<double>> intra_icc, inter_icc;
  std::map<std::string, int> wilcoxon_ok, r2_ok;
  std::size_t below = 0, analyzed = 0;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    study::StudyConfig cfg;
    cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.keep_images = false;
    const auto out = study::run_study(cfg);
    const auto& s = out.stats;
    for (const auto& r : s.intra) {
      const std::string cell = r.method + "/" + r.rater;
      intra_icc[cell].push_back(r.icc ? r.icc->icc : -1.0);
      if (r.below_5) {
        below += r.below_5->analyzed.count;
        analyzed += r.below_5->analyzed.total;
      }
    }
    for (const auto& r : s.inter_rater) inter_icc[r.method].push_back(r.icc ? r.icc->icc : -1.0);
    for (const auto& r : s.inter_method) {
      wilcoxon_ok[r.rater] += r.wilcoxon && r.wilcoxon->p > 0.05;
      r2_ok[r.rater] += r.fit && r.fit->r2 >= 0.65;
    }
    std::fprintf(stderr, "  seed %d done, %.0fs elapsed\n", seed, seconds_since(t0));
  }
  const double secs = seconds_since(t0);
  for (const auto& [cell, v] : intra_icc) {
    const double m = median(v);
    o.check(v.size() == static_cast<std::size_t>(n_seeds) && m >= 0.75 && m <= 0.95,
            "intra " + cell + " median ICC " + num(m, 3));
  }
  for (const auto& [method, v] : inter_icc) {
    const double m = median(v);
    o.check(m >= 0.70, "inter-rater " + method + " median ICC " + num(m, 3));
  }
  const int need = (8 * n_seeds + 9) / 10;
  for (const auto& [rater, c] : wilcoxon_ok)
    o.check(c >= need, "Wilcoxon p>0.05 " + rater + " " + std::to_string(c) + "/" + std::to_string(n_seeds));
  for (const auto& [rater, c] : r2_ok)
    o.check(c >= need, "R2>=0.65 " + rater + " " + std::to_string(c) + "/" + std::to_string(n_seeds));
  const double share = analyzed ? 100.0 * below / analyzed : 0.0;
  o.check(share >= 85.0, "curve MADs below 5deg " + num(share, 1) + "%");
  o.check(secs < 15 * 60.0, std::to_string(n_seeds) + " seeds in " + num(secs, 0) + "s");
  if (n_seeds < 10) o.check(false, "fewer than 10 seeds");
  return o;
}

// ---------------------------------------------------------------------------
// 5. Direct projection against compound-then-project.

Outcome criterion_5() {
  Outcome o;
  const auto ph = single_curve(11.0, 20.0);
  controller::ScanConfig sc;
  sc.scan_speed_mm_s = 3.5;  // long enough for 1200 frames
  auto rec = controller::run_scan(ph, sc, bmode::ImagingConfig{});
  if (rec.frames.size() < 1200) {
    o.check(false, "recording has only " + std::to_string(rec.frames.size()) + " frames");
    return o;
  }
  rec.frames.resize(1200);
  const auto skin = recon::SkinMap::from_recording(rec);
  const recon::SliceDepths sd;

  auto t0 = clk::now();
  const auto vol = recon::compound(rec, 0.5);
  std::vector<recon::CoronalImage> via_volume;
  for (int k = 1; k <= sd.count; ++k) via_volume.push_back(recon::vpi_volume(vol, skin, sd.depth(k), sd.band_mm));
  const double t_volume = seconds_since(t0);

  t0 = clk::now();
  std::vector<recon::CoronalImage> direct;
  for (int k = 1; k <= sd.count; ++k) direct.push_back(recon::vpi_direct(rec, skin, sd.depth(k), sd.band_mm));
  const double t_direct = seconds_since(t0);

  double worst = 0.0;
  for (int k = 0; k < sd.count; ++k) {
    const auto& a = via_volume[k];
    const auto& b = direct[k];
    if (a.width != b.width || a.height != b.height) {
      o.check(false, "grid mismatch at slice " + std::to_string(k + 1));
      return o;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      if (!a.mask[i] || !b.mask[i]) continue;
      sum += std::abs(static_cast<double>(a.pixels[i]) - b.pixels[i]);
      ++n;
    }
    worst = std::max(worst, n ? sum / n : 1.0);
  }
  o.check(worst < 0.05, "max per-slice mean |diff| " + num(worst, 4));
  const double speedup = t_volume / t_direct;
  o.check(speedup >= 5.0, "1200 frames, 9 slices: volume " + num(t_volume, 2) + "s, direct " + num(t_direct, 3) +
                              "s, speedup " + num(speedup, 1) + "x");
  return o;
}

// ---------------------------------------------------------------------------
// 6. Force regulation, contact and tracking.

Outcome criterion_6() {
  Outcome o;
  const auto ph = single_curve(11.0, 20.0);
  for (double setpoint : {10.0, 12.0, 15.0}) {
    controller::ScanConfig sc;
    sc.preset_force_n = setpoint;
    const auto rec = controller::run_scan(ph, sc, bmode::ImagingConfig{});
    const auto& log = rec.metadata.at("control_log");
    std::size_t n = 0, ok = 0;
    for (std::size_t i = 0; i < log.at("t").size(); ++i) {
      if (log.at("phase")[i] != "scanning") continue;
      ++n;
      ok += std::abs(log.at("force_n")[i].get<double>() - setpoint) <= 1.0;
    }
    const bool coupled = std::all_of(rec.frames.begin(), rec.frames.end(),
                                     [](const bmode::BModeFrame& f) { return f.contact_fraction == 1.0; });
    const double share = n ? 100.0 * ok / n : 0.0;
    o.check(share >= 95.0 && coupled, num(setpoint, 0) + "N: " + num(share, 1) + "% within 1N, contact " +
                                          (coupled ? "full" : "lost") + " on " +
                                          std::to_string(rec.frames.size()) + " frames");
  }

  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const detector::DetectorNoise noise{2.0, 0.3, 0.0, seed};
    controller::ScanConfig sc;
    sc.seed = seed;
    const auto rec = controller::run_scan(ph, sc, bmode::ImagingConfig{160, 120}, noise);
    const auto& track = rec.metadata.at("track");
    const auto& truth = track.at("truth_x");
    const auto& fused = track.at("x");
    const std::size_t m = truth.size(), off = fused.size() - m;
    double se = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = fused[off + i].get<double>() - truth[i].get<double>();
      se += d * d;
    }
    worst = std::max(worst, std::sqrt(se / m));
  }
  o.check(worst < 2.0, "Kalman RMSE at 30% misses, worst of 3 seeds " + num(worst) + "mm");
  return o;
}

// ---------------------------------------------------------------------------
// 7. Fault phenomenology.

// Mean intensity of the covered pixels in each coronal row.
std::vector<double> row_means(const recon::CoronalImage& img) {
  std::vector<double> m(img.height, 0.0);
  for (int r = 0; r < img.height; ++r) {
    double s = 0.0;
    int n = 0;
    for (int c = 0; c < img.width; ++c)
      if (img.covered(c, r)) {
        s += img.at(c, r);
        ++n;
      }
    m[r] = n ? s / n : 0.0;
  }
  return m;
}

struct DarkRuns {
  int runs = 0;
  double longest_mm = 0.0;
};

// Runs of rows darker than half the image's median row.
DarkRuns dark_runs(const recon::CoronalImage& img) {
  const auto m = row_means(img);
  const double threshold = 0.5 * median(m);
  DarkRuns d;
  int len = 0;
  for (std::size_t r = 0; r <= m.size(); ++r) {
    if (r < m.size() && m[r] < threshold) {
      ++len;
      continue;
    }
    if (len > 0) {
      ++d.runs;
      d.longest_mm = std::max(d.longest_mm, len * img.spacing);
    }
    len = 0;
  }
  return d;
}

double lumbar_angle(const phantom::SpinePhantom& ph, controller::Mode mode) {
  const auto cfg = study::StudyConfig::noiseless();
  const auto out = study::run_one_scan(ph, cfg, mode, 1);
  if (!out.match.front()) throw Error(ErrorCode::ExtractionFailed, "lumbar curve not found");
  return out.measured[*out.match.front()].angle_deg;
}

Outcome criterion_7(double compliance, double margin_deg) {
  Outcome o;
  const bmode::ImagingConfig imaging{160, 120};

  const auto nominal = controller::run_scan(single_curve(11.0, 20.0), controller::ScanConfig{}, imaging);
  const auto gapped = controller::run_scan(single_curve(11.0, 20.0, 0.0, 40.0), controller::ScanConfig{}, imaging);
  const auto d_nominal = dark_runs(best_slice(nominal, nullptr));
  const auto d_gapped = dark_runs(best_slice(gapped, nullptr));
  o.check(d_nominal.runs == 0 && d_gapped.runs >= 1 && d_gapped.longest_mm >= 20.0,
          "scapula gap: dark band " + num(d_gapped.longest_mm, 0) + "mm (nominal has " +
              std::to_string(d_nominal.runs) + " dark runs)");

  auto manual = controller::manual_defaults();
  manual.faults = {{controller::FaultEvent::Kind::LiftOff, 15.0, 1.5, 5.0},
                   {controller::FaultEvent::Kind::LiftOff, 35.0, 1.5, 5.0}};
  const auto lifted = controller::run_scan(single_curve(11.0, 20.0), manual, imaging);
  const auto d_manual = dark_runs(best_slice(lifted, nullptr));
  o.check(d_manual.runs == 2 && d_nominal.runs == 0,
          "manual lift-off: " + std::to_string(d_manual.runs) + " dark spots, robotic " +
              std::to_string(d_nominal.runs));

  const auto rigid = single_curve(4.5, 20.0);
  const auto soft = single_curve(4.5, 20.0, compliance);
  const double gap_rigid = lumbar_angle(rigid, controller::Mode::Robotic) - lumbar_angle(rigid, controller::Mode::Manual);
  const double gap_soft = lumbar_angle(soft, controller::Mode::Robotic) - lumbar_angle(soft, controller::Mode::Manual);
  o.check(gap_soft - gap_rigid >= margin_deg,
          "compliance " + num(compliance, 1) + "deg/N: robotic minus manual lumbar " + num(gap_soft) + " vs " +
              num(gap_rigid) + " rigid, inflation " + num(gap_soft - gap_rigid) + " >= " + num(margin_deg, 1));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Study re-run from its manifest.

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion_8() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("spinescan-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);

  study::StudyConfig cfg;
  cfg.cohort.n_subjects = 4;
  cfg.cohort.n_single = 2;
  cfg.master_seed = 11;
  study::write_study(root / "a", study::run_study(cfg));
  const auto manifest = io::read_json(root / "a" / "manifest.json");
  study::write_study(root / "b", study::run_study(study::study_config_from_json(manifest.at("config"))));

  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || file_bytes(e.path()) != file_bytes(other)) ++differ;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) files_b += e.is_regular_file();
  fs::remove_all(root);
  o.check(files > 0 && differ == 0 && files == files_b,
          std::to_string(files) + " files compared, " + std::to_string(differ) + " differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  int seeds = 10;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--seeds" && i + 1 < argc) {
      seeds = std::atoi(argv[++i]);
    } else {
      const int c = std::atoi(a.c_str());
      if (c < 1 || c > 8) {
        std::fprintf(stderr, "usage: acceptance [--seeds N] [criterion ...]\n");
        return 2;
      }
      selected.insert(c);
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"SPA recovered within 1.5deg on 7/20/31deg phantoms", criterion_1},
      {"ICC matches the ANOVA oracle", criterion_2},
      {"Wilcoxon exact p matches enumeration", criterion_3},
      {"study regime over master seeds", [seeds] { return criterion_4(seeds); }},
      {"direct projection agrees with and outpaces the volume path", criterion_5},
      {"force, contact and tracking quality", criterion_6},
      {"fault phenomenology", [] { return criterion_7(1.0, 1.0); }},
      {"byte-identical study re-run", criterion_8},
  };

  bool all = true;
  for (int c : selected) {
    const auto& [title, run] = criteria[c - 1];
    Outcome o;
    const auto t0 = clk::now();
    try {
      o = run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s (%s) [%.1fs]\n", c, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
