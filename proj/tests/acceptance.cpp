// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "objnav/controller.hpp"
#include "objnav/costfield.hpp"
#include "objnav/dataset.hpp"
#include "objnav/fmm.hpp"
#include "objnav/harness.hpp"
#include "objnav/suite.hpp"
#include "objnav/tensor.hpp"
#include "oracles.hpp"

using namespace objnav;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kFmmRelTol = 0.10;
constexpr double kFmmSeconds = 30.0;
constexpr double kWeightSumTol = 1e-9;
constexpr double kHandWeightTol = 1e-9;
constexpr double kLn2Tol = 1e-6;
constexpr double kCostLossTol = 1e-9;
constexpr double kAffineDirTol = 1e-12;
constexpr double kCompetenceSr = 0.95;
constexpr double kCompetenceSpl = 0.85;
constexpr double kCompetenceSeconds = 300.0;
constexpr double kOrderingGap = 0.05;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

int failures = 0;

void report(const char* name, const Check& c, const std::string& summary) {
  std::printf("%s %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.ok ? summary.c_str() : c.detail.c_str());
  std::fflush(stdout);
  failures += c.ok ? 0 : 1;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Cell random_free(const OccupancyGrid& occ, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<int> u(0, occ.width() - 1);
  for (;;) {
    const Cell c{u(rng), u(rng)};
    if (!occ[c]) return c;
  }
}

void fmm_vs_dijkstra() {
  Check c;
  const auto t0 = Clock::now();
  std::size_t compared = 0;
  double worst = 0.0;
  for (std::uint64_t m = 0; m < 100 && c.ok; ++m) {
    const OccupancyGrid occ = oracle::random_map(64, 1000 + m);
    const Cell seed = random_free(occ, 5000 + m);
    const Grid<double> f = fmm_distance(occ, std::span(&seed, 1), 0.05);
    const Grid<double> d = oracle::dijkstra8(occ, {seed}, 0.05);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double a = f.values()[i], b = d.values()[i];
      if (std::isfinite(a) != std::isfinite(b)) {
        c.fail("map " + std::to_string(m) + ": reachability differs at cell " + std::to_string(i));
        break;
      }
      if (!std::isfinite(b) || b == 0.0) {
        if (b == 0.0 && a != 0.0) c.fail("map " + std::to_string(m) + ": seed cost is not zero");
        continue;
      }
      ++compared;
      worst = std::max(worst, std::abs(a - b) / b);
      if (std::abs(a - b) > kFmmRelTol * b) {
        c.fail(fmt("map %.0f: relative error %.4f > 0.10", static_cast<double>(m), std::abs(a - b) / b));
        break;
      }
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= kFmmSeconds) c.fail(fmt("runtime %.1f s >= 30 s", secs));
  report("fmm_vs_dijkstra", c,
         fmt("100 maps 64x64, %.0f cells, worst relative error %.4f, %.2f s", static_cast<double>(compared), worst,
             secs));
}

void mppi_math() {
  Check c;
  Rng rng = make_rng(21);
  const double lambda = 0.5;

  double worst_sum = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // dyadic costs keep the shifted copies exact
    std::uniform_int_distribution<int> u(0, 64 * 64);
    std::vector<double> s(256);
    for (double& x : s) x = u(rng) / 64.0;
    const auto w = importance_weights(s, lambda);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    if (std::abs(sum - 1.0) > kWeightSumTol) c.fail(fmt("|sum w - 1| = %.3g", std::abs(sum - 1.0)));
    std::vector<double> shifted = s;
    for (double& x : shifted) x += 512.0 * (trial % 7 - 3);
    if (importance_weights(shifted, lambda) != w) c.fail("shifted costs changed the weights");
  }

  for (double beta : {0.0, 2.0, -3.5, 100.0}) {
    const auto w = importance_weights(std::vector<double>{beta, beta + lambda * std::log(2.0)}, lambda);
    if (std::abs(w[0] - 2.0 / 3.0) > kHandWeightTol || std::abs(w[1] - 1.0 / 3.0) > kHandWeightTol)
      c.fail(fmt("hand case beta=%.1f gave [%.12f, %.12f]", beta, w[0], w[1]));
  }

  const VelocityLimits wide{-100, 100, -100, 100};
  const std::vector<Control> u{{0.5, 0.1}, {0.4, -0.2}, {0.3, 0.0}};
  PerturbationBatch eps{2, 3, {}};
  std::normal_distribution<double> n(0.0, 0.35);
  for (int i = 0; i < 6; ++i) eps.eps.push_back({n(rng), n(rng)});
  const auto onehot = update_controls(u, std::vector<double>{0.0, 1.0}, eps, wide);
  for (int t = 0; t < 3; ++t)
    if (onehot[t].v != u[t].v + eps.at(1, t).v || onehot[t].omega != u[t].omega + eps.at(1, t).omega)
      c.fail("one-hot update differs from u + eps_1");
  PerturbationBatch sym = eps;
  for (int t = 0; t < 3; ++t) sym.at(1, t) = {-eps.at(0, t).v, -eps.at(0, t).omega};
  const auto same = update_controls(u, std::vector<double>{0.5, 0.5}, sym, wide);
  for (int t = 0; t < 3; ++t)
    if (same[t].v != u[t].v || same[t].omega != u[t].omega) c.fail("symmetric update moved the controls");

  report("mppi_math", c,
         fmt("100 batches, worst |sum w - 1| %.2g, shift invariance exact, [2/3, 1/3] hand case, one-hot and "
             "symmetric updates exact",
             worst_sum));
}

void loss_units() {
  Check c;
  Rng rng = make_rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Grid<double> gt_occ(140, 140);
  for (double& v : gt_occ.values()) v = u(rng) < 0.3 ? 1.0 : 0.0;
  const double ln2 = occupancy_loss(gt_occ, Grid<double>(140, 140, 0.5));
  if (std::abs(ln2 - std::log(2.0)) > kLn2Tol) c.fail(fmt("occupancy_loss(0.5) = %.9f", ln2));

  auto grid = [](int w, int h, std::vector<double> v) { return Grid<double>(w, h, std::move(v)); };
  const Grid<double> gt = grid(2, 2, {0.1, 0.3, 0.5, 0.7});
  const double c1 = costmap_loss(gt, grid(2, 2, {0.2, 0.4, 0.6, 0.8}), Grid<double>(2, 2, 0.0));
  const double c2 = costmap_loss(gt, grid(2, 2, {0.9, 0.5, 0.9, 0.0}), grid(2, 2, {1, 0, 0, 1}));
  const double c3 = costmap_loss(gt, gt, Grid<double>(2, 2, 0.0));
  if (std::abs(c1 - 0.1) > kCostLossTol) c.fail(fmt("costmap_loss shift case = %.12f", c1));
  if (std::abs(c2 - 0.15) > kCostLossTol) c.fail(fmt("costmap_loss masked case = %.12f", c2));
  if (c3 != 0.0) c.fail("costmap_loss(gt, gt) != 0");

  double lo = 2.0, hi = 0.0, worst_affine = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Grid<double> a(24, 24), b(24, 24), occ(24, 24, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.values()[i] = u(rng);
      b.values()[i] = u(rng);
      occ.values()[i] = u(rng) < 0.1;
    }
    const double l = gradient_direction_loss(a, b, occ);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    if (!(l >= 0.0 && l <= 2.0)) c.fail(fmt("gradient_direction_loss = %.6f outside [0,2]", l));
    const Grid<double> affine = map_grid<double>(a, [](double v) { return 2.0 * v + 0.3; });
    const double la = gradient_direction_loss(a, affine, occ);
    worst_affine = std::max(worst_affine, la);
    if (la > kAffineDirTol) c.fail(fmt("gradient_direction_loss(2 gt + 0.3) = %.3g", la));
  }
  report("loss_units", c,
         fmt("occupancy ln2 err %.2g, costmap hand cases exact, direction loss in [%.3f, %.3f], affine max %.2g",
             std::abs(ln2 - std::log(2.0)), lo, hi, worst_affine));
}

SuiteConfig suite(AgentKind kind, std::vector<std::uint64_t> seeds, int episodes) {
  SuiteConfig c;
  c.world_seeds = std::move(seeds);
  c.episodes_per_world = episodes;
  c.agent.kind = kind;
  c.sampling.max_steps = 500;
  return c;
}

SuiteReport run_timed(const SuiteConfig& cfg, const char* label, double& secs) {
  const auto t0 = Clock::now();
  SuiteReport r = run_suite(cfg);
  secs = seconds_since(t0);
  std::printf("  %s: %d episodes, SR %.3f, SPL %.3f, DTS %.3f, %d errors, %.1f s\n", label, r.episodes, r.sr, r.spl,
              r.dts, r.failures, secs);
  std::fflush(stdout);
  return r;
}

std::vector<SuiteReport> all_reports;

void competence() {
  Check c;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 20000; s < 20020; ++s) seeds.push_back(s);
  double secs = 0.0;
  const SuiteReport r = run_timed(suite(AgentKind::Gt, seeds, 1), "gt, 20 worlds", secs);
  if (r.failures) c.fail(std::to_string(r.failures) + " episodes aborted");
  if (r.sr < kCompetenceSr) c.fail(fmt("SR %.3f < 0.95", r.sr));
  if (r.spl < kCompetenceSpl) c.fail(fmt("SPL %.3f < 0.85", r.spl));
  if (secs >= kCompetenceSeconds) c.fail(fmt("runtime %.1f s >= 300 s", secs));
  report("controller_competence", c, fmt("SR %.3f, SPL %.3f over 20 worlds in %.1f s", r.sr, r.spl, secs));
  all_reports.push_back(r);
}

const std::vector<std::uint64_t> kOrderingSeeds{30000, 30001, 30002, 30003, 30004, 30005, 30006, 30007};

void ordering(SuiteReport& gt_out) {
  Check c;
  double s1 = 0, s2 = 0, s3 = 0;
  const SuiteReport gt = run_timed(suite(AgentKind::Gt, kOrderingSeeds, 40), "gt, 8x40", s1);
  const SuiteReport fr = run_timed(suite(AgentKind::Frontier, kOrderingSeeds, 40), "frontier, 8x40", s2);
  const SuiteReport rn = run_timed(suite(AgentKind::Random, kOrderingSeeds, 40), "random, 8x40", s3);
  if (gt.sr - fr.sr < kOrderingGap) c.fail(fmt("SR(gt) %.3f - SR(frontier) %.3f < 0.05", gt.sr, fr.sr));
  if (fr.sr - rn.sr < kOrderingGap) c.fail(fmt("SR(frontier) %.3f - SR(random) %.3f < 0.05", fr.sr, rn.sr));
  report("ordering", c, fmt("SR gt %.3f > frontier %.3f > random %.3f on 320 shared episodes", gt.sr, fr.sr, rn.sr));
  all_reports.push_back(gt);
  all_reports.push_back(fr);
  all_reports.push_back(rn);
  gt_out = gt;
}

EpisodeResult spl_case(bool success, double p, double l) {
  EpisodeResult r;
  r.success = success;
  r.path_length = p;
  r.shortest_length = l;
  return r;
}

void metrics() {
  Check c;
  const std::vector<EpisodeResult> one{spl_case(true, 5.0, 5.0)}, zero{spl_case(false, 5.0, 5.0)},
      half{spl_case(true, 10.0, 5.0)};
  if (spl(one) != 1.0 || spl(zero) != 0.0 || spl(half) != 0.5) c.fail("SPL trivial cases are not 1.0 / 0.0 / 0.5");

  for (const auto& r : all_reports)
    if (r.spl > r.sr) c.fail(fmt("suite with SPL %.4f > SR %.4f", r.spl, r.sr));

  const Smoothness flat = smoothness(std::vector<Control>(30, Control{0.4, -0.3}), 0.1);
  const Smoothness still = smoothness(std::vector<Control>{{0.0, 0.0}}, 0.1);
  for (const Smoothness& s : {flat, still})
    if (s.acc_linear != 0.0 || s.acc_angular != 0.0 || s.jerk_linear != 0.0 || s.jerk_angular != 0.0)
      c.fail("smoothness of a constant history is not zero");
  std::vector<Control> ramp;
  for (int i = 0; i < 10; ++i) ramp.push_back({0.0625 * i, 0.0});
  if (smoothness(ramp, 0.125).jerk_linear != 0.0) c.fail("smoothness of a dyadic ramp has jerk");

  Rng rng = make_rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int invariant = 0;
  for (int m = 0; m < 100; ++m) {
    Grid<double> gt(64, 64);
    Grid<std::uint8_t> nav(64, 64, 1);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.values()[i] = u(rng);
      nav.values()[i] = u(rng) < 0.85;
    }
    const double shift = 0.25 + u(rng);
    const Grid<double> shifted = map_grid<double>(gt, [shift](double v) { return v + shift; });
    bool all = true;
    for (int n : {5, 9}) all = all && action_prediction_accuracy(gt, shifted, nav, n) == 100.0;
    invariant += all;
  }
  if (invariant != 100) c.fail(fmt("aAP shift invariance on %.0f of 100 maps", invariant));
  report("metrics", c,
         fmt("SPL 1/0/0.5 exact, SPL <= SR on %.0f suites, smoothness zero cases exact, aAP shift invariance "
             "%.0f%%",
             static_cast<double>(all_reports.size()), static_cast<double>(invariant)));
}

void dataset() {
  Check c;
  // stride: a 10-step episode samples 0, 4, 8; a 23-step one samples 0..20
  const WorldGrid world = generate_world(60001);
  EpisodeSampling sp;
  EpisodeConfig ep = sample_episode(world, 7, sp);
  AgentSpec spec;
  spec.goal.theta_cost = -1.0;
  const fs::path root = fs::temp_directory_path() / "objnav_acceptance_dataset";
  fs::remove_all(root);
  ep.max_steps = 10;
  const CollectResult r10 = collect_episode(world, ep, spec, root, 0, 3);
  const std::vector<std::string> want{"w60001_e0/t0000", "w60001_e0/t0004", "w60001_e0/t0008"};
  if (r10.record.samples != want) c.fail("10-step episode did not sample steps 0, 4, 8");
  ep.max_steps = 23;
  std::vector<int> steps;
  run_episode(world, ep, spec, 3, [&](const StepView& v) {
    if (v.step % kSampleStride == 0) steps.push_back(v.step);
  });
  if (steps != std::vector<int>{0, 4, 8, 12, 16, 20}) c.fail("23-step episode did not sample 0..20 by 4");

  // SMT round trip on random shapes and values
  Rng rng = make_rng(51);
  std::uniform_int_distribution<int> rank(0, 4), dim(1, 9);
  std::uniform_int_distribution<std::uint32_t> bits;
  int exact = 0;
  for (int k = 0; k < 1000; ++k) {
    Tensor t;
    const int r = rank(rng);
    for (int i = 0; i < r; ++i) t.shape.push_back(static_cast<std::uint32_t>(dim(rng)));
    t.data.resize(Tensor::element_count(t.shape));
    for (float& v : t.data) {
      std::uint32_t b = bits(rng);
      if ((b & 0x7f800000u) == 0x7f800000u) b &= 0xbfffffffu;  // keep values finite
      std::memcpy(&v, &b, sizeof v);
    }
    const std::string bytes = encode_smt(t);
    const Tensor back = decode_smt(bytes);
    exact += back.shape == t.shape && std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0 &&
             encode_smt(back) == bytes;
  }
  if (exact != 1000) c.fail(fmt("SMT round trip bit-exact on %.0f of 1000", exact));

  // shapes
  const DatasetSample s = load_sample(root / want[0]);
  try {
    validate_sample(s);
  } catch (const std::exception& e) {
    c.fail(std::string("collected sample rejected: ") + e.what());
  }
  const std::vector<std::uint32_t> local_shape{18, 140, 140}, global_shape{18, 420, 420};
  if (s.local.shape != local_shape || s.global.shape != global_shape) c.fail("collected sample has wrong shapes");
  auto rejects = [](DatasetSample bad) {
    try {
      validate_sample(bad);
    } catch (const DatasetError&) {
      return true;
    }
    return false;
  };
  DatasetSample bad_local = s;
  bad_local.local.shape = {18, 139, 141};
  DatasetSample bad_global = s;
  bad_global.global = Tensor{{18, 140, 140}, std::vector<float>(18 * 140 * 140)};
  DatasetSample bad_channels = s;
  bad_channels.local = Tensor{{17, 140, 140}, std::vector<float>(17 * 140 * 140)};
  if (!rejects(bad_local) || !rejects(bad_global) || !rejects(bad_channels)) c.fail("a wrong shape was accepted");
  fs::remove_all(root);
  report("dataset", c, "stride-4 steps exact, 1000/1000 SMT round trips bit-exact, (18,140,140)/(18,420,420) enforced");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(const SuiteReport& first) {
  Check c;
  const fs::path a = fs::path("acceptance_out") / "run1";
  const fs::path b = fs::path("acceptance_out") / "run2";
  write_report(first, a);
  double secs = 0.0;
  const SuiteReport again = run_timed(suite(AgentKind::Gt, kOrderingSeeds, 40), "gt, 8x40 rerun", secs);
  write_report(again, b);
  const std::string x = read_file(a / "episodes.csv"), y = read_file(b / "episodes.csv");
  if (x.empty()) c.fail("episodes.csv is empty");
  if (x != y) c.fail("episodes.csv differs between runs");
  report("determinism", c, fmt("episodes.csv byte-identical across reruns (%.0f bytes)", static_cast<double>(x.size())));
}

}  // namespace

int main() {
  auto guarded = [](const char* name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      Check c;
      c.fail(std::string("threw: ") + e.what());
      report(name, c, "");
    }
  };
  SuiteReport gt;
  guarded("fmm_vs_dijkstra", fmm_vs_dijkstra);
  guarded("mppi_math", mppi_math);
  guarded("loss_units", loss_units);
  guarded("controller_competence", competence);
  guarded("ordering", [&] { ordering(gt); });
  guarded("metrics", metrics);
  guarded("dataset", dataset);
  guarded("determinism", [&] { determinism(gt); });
  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
