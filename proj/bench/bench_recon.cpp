// OpenMP versus serial timings for the parallel stages: frame rendering,
// compounding and both coronal projections.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <algorithm>

#include "spinescan/bmode.hpp"
#include "spinescan/controller.hpp"
#include "spinescan/phantom.hpp"
#include "spinescan/recon.hpp"

using namespace spinescan;

namespace {

const phantom::SpinePhantom& bench_phantom() {
  static const auto ph = [] {
    phantom::PhantomConfig pc;
    pc.curves = {{11.0, 20.0, Side::Right, 0.0}};
    return phantom::build_phantom(pc);
  }();
  return ph;
}

// Full-resolution robotic scan cut to 300 frames.
const bmode::ScanRecording& bench_recording() {
  static const auto rec = [] {
    auto r = controller::run_scan(bench_phantom(), controller::ScanConfig{}, bmode::ImagingConfig{});
    r.frames.resize(std::min<std::size_t>(r.frames.size(), 300));
    return r;
  }();
  return rec;
}

const recon::SkinMap& bench_skin() {
  static const auto s = recon::SkinMap::from_recording(bench_recording());
  return s;
}

const recon::Volume& bench_volume() {
  static const auto v = recon::compound(bench_recording(), 0.5);
  return v;
}

void tag(benchmark::State& state, bool parallel) {
  state.counters["threads"] = parallel ? omp_get_max_threads() : 1;
}

bmode::ProbePose bench_pose() {
  const auto& ph = bench_phantom();
  bmode::ProbePose p;
  const double z = 0.5 * (ph.z_min() + ph.z_max());
  p.position = ph.centerline_world(z);
  p.position.y() -= 15.0;
  return p;
}

void BM_RenderFrame(benchmark::State& state) {
  const auto pose = bench_pose();
  const bmode::ImagingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(bmode::render_frame(bench_phantom(), pose, cfg));
  tag(state, true);
}

void BM_RenderFrameSerial(benchmark::State& state) {
  const auto pose = bench_pose();
  const bmode::ImagingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(bmode::serial::render_frame(bench_phantom(), pose, cfg));
  tag(state, false);
}

void BM_Compound(benchmark::State& state) {
  const auto& rec = bench_recording();
  for (auto _ : state) benchmark::DoNotOptimize(recon::compound(rec, 0.5));
  tag(state, true);
}

void BM_CompoundSerial(benchmark::State& state) {
  const auto& rec = bench_recording();
  for (auto _ : state) benchmark::DoNotOptimize(recon::serial::compound(rec, 0.5));
  tag(state, false);
}

void BM_VpiVolume(benchmark::State& state) {
  const auto& vol = bench_volume();
  const auto& skin = bench_skin();
  for (auto _ : state) benchmark::DoNotOptimize(recon::vpi_volume(vol, skin, 16.0, 3.0));
  tag(state, true);
}

void BM_VpiVolumeSerial(benchmark::State& state) {
  const auto& vol = bench_volume();
  const auto& skin = bench_skin();
  for (auto _ : state) benchmark::DoNotOptimize(recon::serial::vpi_volume(vol, skin, 16.0, 3.0));
  tag(state, false);
}

void BM_VpiDirect(benchmark::State& state) {
  const auto& rec = bench_recording();
  const auto& skin = bench_skin();
  for (auto _ : state) benchmark::DoNotOptimize(recon::vpi_direct(rec, skin, 16.0, 3.0));
  tag(state, true);
}

void BM_VpiDirectSerial(benchmark::State& state) {
  const auto& rec = bench_recording();
  const auto& skin = bench_skin();
  for (auto _ : state) benchmark::DoNotOptimize(recon::serial::vpi_direct(rec, skin, 16.0, 3.0));
  tag(state, false);
}

}  // namespace

BENCHMARK(BM_RenderFrame)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderFrameSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Compound)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CompoundSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VpiVolume)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VpiVolumeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VpiDirect)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VpiDirectSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
