#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "objnav/harness.hpp"
#include "objnav/predictor.hpp"
#include "objnav/tensor.hpp"

namespace objnav {

constexpr int kSampleStride = 4;

/// One training sample as stored on disk.
struct DatasetSample {
  Tensor local;   // (18,140,140)
  Tensor global;  // (18,420,420)
  Tensor nav;     // (1,140,140), normalized
  Tensor occ;     // (1,140,140)
  Tensor rays;    // (2,n): depth row, hit-class row (-1 for no hit)
  AgentState pose;
  int orientation_bin = 1;
  int target = 0;
  std::uint64_t world_seed = 0;
  int episode = 0;
  int step = 0;
  Cell origin{};         // world cell of local window cell (0,0)
  Cell global_origin{};  // world cell of global map cell (0,0)

  friend bool operator==(const DatasetSample&, const DatasetSample&) = default;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Throws DatasetError naming the first broken invariant.
inline void validate_sample(const DatasetSample& s) {
  const auto n = static_cast<std::uint32_t>(kLocalMapSize);
  const auto g = static_cast<std::uint32_t>(kGlobalMapSize);
  const auto c = static_cast<std::uint32_t>(kMapChannels);
  auto expect = [](const Tensor& t, std::vector<std::uint32_t> shape, const char* name) {
    if (t.shape != shape) throw DatasetError(std::string(name) + " has the wrong shape");
    if (t.data.size() != Tensor::element_count(shape)) throw DatasetError(std::string(name) + " data size mismatch");
  };
  expect(s.local, {c, n, n}, "local");
  expect(s.global, {c, g, g}, "global");
  expect(s.nav, {1, n, n}, "nav");
  expect(s.occ, {1, n, n}, "occ");
  if (s.rays.shape.size() != 2 || s.rays.shape[0] != 2) throw DatasetError("rays must be (2,n)");
  for (float v : s.nav.data)
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw DatasetError("nav cost outside [0,1]");
  for (float v : s.occ.data)
    if (v != 0.0f && v != 1.0f) throw DatasetError("occupancy is not binary");
  if (s.step < 0 || s.step % kSampleStride != 0) throw DatasetError("step id is not a multiple of 4");
  if (s.orientation_bin < 1 || s.orientation_bin > 8) throw DatasetError("orientation bin outside 1..8");
  if (s.orientation_bin != orientation_bin(s.pose.theta)) throw DatasetError("orientation bin does not match pose");
  if (s.target < 0 || s.target >= static_cast<int>(kTargetCategories.size())) throw DatasetError("unknown target id");
}

inline Tensor ray_tensor(const Observation& obs) {
  const auto n = static_cast<std::uint32_t>(obs.rays.size());
  Tensor t{{2, n}, std::vector<float>(2 * std::size_t{n})};
  for (std::uint32_t i = 0; i < n; ++i) {
    const Ray& r = obs.rays[i];
    t.data[i] = static_cast<float>(r.hit_distance);
    t.data[n + i] = r.hit_class ? static_cast<float>(static_cast<int>(*r.hit_class)) : -1.0f;
  }
  return t;
}

inline void save_sample(const std::filesystem::path& dir, const DatasetSample& s) {
  std::filesystem::create_directories(dir);
  write_tensor((dir / "local.smt").string(), s.local);
  write_tensor((dir / "global.smt").string(), s.global);
  write_tensor((dir / "nav.smt").string(), s.nav);
  write_tensor((dir / "occ.smt").string(), s.occ);
  write_tensor((dir / "rays.smt").string(), s.rays);
  const nlohmann::json meta = {
      {"world_seed", s.world_seed},
      {"episode", s.episode},
      {"step", s.step},
      {"target", s.target},
      {"orientation_bin", s.orientation_bin},
      {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"theta", s.pose.theta}, {"v", s.pose.v}, {"omega", s.pose.omega}}},
      {"origin", {s.origin.x, s.origin.y}},
      {"global_origin", {s.global_origin.x, s.global_origin.y}},
  };
  std::ofstream f(dir / "meta.json");
  if (!f) throw Error("cannot write " + (dir / "meta.json").string());
  f << meta.dump(2) << '\n';
}

inline DatasetSample load_sample(const std::filesystem::path& dir) {
  DatasetSample s;
  s.local = read_tensor((dir / "local.smt").string());
  s.global = read_tensor((dir / "global.smt").string());
  s.nav = read_tensor((dir / "nav.smt").string());
  s.occ = read_tensor((dir / "occ.smt").string());
  s.rays = read_tensor((dir / "rays.smt").string());
  std::ifstream f(dir / "meta.json");
  if (!f) throw Error("cannot open " + (dir / "meta.json").string());
  try {
    const auto meta = nlohmann::json::parse(f);
    s.world_seed = meta.at("world_seed").get<std::uint64_t>();
    s.episode = meta.at("episode").get<int>();
    s.step = meta.at("step").get<int>();
    s.target = meta.at("target").get<int>();
    s.orientation_bin = meta.at("orientation_bin").get<int>();
    s.pose.x = meta.at("pose").at("x").get<double>();
    s.pose.y = meta.at("pose").at("y").get<double>();
    s.pose.theta = meta.at("pose").at("theta").get<double>();
    s.pose.v = meta.at("pose").value("v", 0.0);
    s.pose.omega = meta.at("pose").value("omega", 0.0);
    s.origin = {meta.at("origin").at(0).get<int>(), meta.at("origin").at(1).get<int>()};
    s.global_origin = {meta.at("global_origin").at(0).get<int>(), meta.at("global_origin").at(1).get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("bad meta.json in " + dir.string() + ": " + e.what());
  }
  validate_sample(s);
  return s;
}

struct EpisodeRecord {
  std::uint64_t world_seed = 0;
  int episode = 0;
  AgentState start;
  CellClass target = CellClass::Bed;
  int steps = 0;
  bool success = false;
  bool failed = false;
  std::string failure_reason;
  std::vector<std::string> samples;  // directories relative to the split root

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct CollectResult {
  EpisodeRecord record;
  EpisodeResult result;
};

/// Runs the ground-truth agent on one episode and writes a sample every fourth
/// step (0, 4, 8, ...) under `root / <episode dir>`.
inline CollectResult collect_episode(const WorldGrid& world, const EpisodeConfig& episode, const AgentSpec& spec,
                                     const std::filesystem::path& root, int episode_index, std::uint64_t seed) {
  CollectResult out;
  EpisodeRecord& rec = out.record;
  rec.world_seed = world.seed;
  rec.episode = episode_index;
  rec.start = episode.start;
  rec.target = episode.target;

  const Grid<double> dist = target_distance(world, episode.target);
  const Grid<double> occ = world_occupancy(world);
  const std::string episode_dir = "w" + std::to_string(world.seed) + "_e" + std::to_string(episode_index);

  StepHook hook = [&](const StepView& v) {
    if (v.step % kSampleStride != 0) return;
    DatasetSample s;
    s.local = map_tensor(v.local);
    s.global = map_tensor(v.global);
    const PredictionResponse gt = oracle_window(dist, occ, world.cell_at(v.pose.x, v.pose.y), world.resolution);
    s.nav = grid_tensor(gt.nav);
    s.occ = grid_tensor(gt.occ);
    s.rays = ray_tensor(v.observation);
    s.pose = v.pose;
    s.orientation_bin = orientation_bin(v.pose.theta);
    s.target = target_id(episode.target);
    s.world_seed = world.seed;
    s.episode = episode_index;
    s.step = v.step;
    s.origin = v.local.origin();
    s.global_origin = v.global.origin();
    char name[16];
    std::snprintf(name, sizeof name, "t%04d", v.step);
    const std::string rel = episode_dir + "/" + name;
    save_sample(root / rel, s);
    rec.samples.push_back(rel);
  };

  AgentSpec gt_spec = spec;
  gt_spec.kind = AgentKind::Gt;
  gt_spec.provider_factory = {};
  out.result = run_episode(world, episode, gt_spec, seed, hook, episode_index, nullptr, &dist);
  rec.steps = out.result.steps;
  rec.success = out.result.success;
  rec.failed = out.result.failed;
  rec.failure_reason = out.result.failure_reason;
  return out;
}

struct DatasetManifest {
  std::string split;
  std::vector<EpisodeRecord> episodes;

  [[nodiscard]] std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.samples.size();
    return n;
  }
  [[nodiscard]] std::vector<std::string> samples() const {
    std::vector<std::string> out;
    for (const auto& e : episodes) out.insert(out.end(), e.samples.begin(), e.samples.end());
    return out;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : m.episodes) {
    eps.push_back({{"world_seed", e.world_seed},
                   {"episode", e.episode},
                   {"start", {{"x", e.start.x}, {"y", e.start.y}, {"theta", e.start.theta}}},
                   {"target", to_string(e.target)},
                   {"steps", e.steps},
                   {"success", e.success},
                   {"failed", e.failed},
                   {"failure_reason", e.failure_reason},
                   {"samples", e.samples}});
  }
  return {{"version", 1},
          {"split", m.split},
          {"counts", {{"episodes", m.episodes.size()}, {"samples", m.sample_count()}}},
          {"samples", m.samples()},
          {"episodes", eps}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw DatasetError("unsupported manifest version");
    DatasetManifest m;
    m.split = j.at("split").get<std::string>();
    for (const auto& e : j.at("episodes")) {
      EpisodeRecord r;
      r.world_seed = e.at("world_seed").get<std::uint64_t>();
      r.episode = e.at("episode").get<int>();
      r.start = {e.at("start").at("x").get<double>(), e.at("start").at("y").get<double>(),
                 e.at("start").at("theta").get<double>(), 0.0, 0.0};
      r.target = parse_target(e.at("target").get<std::string>());
      r.steps = e.at("steps").get<int>();
      r.success = e.at("success").get<bool>();
      r.failed = e.at("failed").get<bool>();
      r.failure_reason = e.at("failure_reason").get<std::string>();
      r.samples = e.at("samples").get<std::vector<std::string>>();
      m.episodes.push_back(std::move(r));
    }
    if (j.at("counts").at("episodes").get<std::size_t>() != m.episodes.size() ||
        j.at("counts").at("samples").get<std::size_t>() != m.sample_count())
      throw DatasetError("manifest counts disagree with its episode list");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& split_dir) {
  std::ifstream f(split_dir / "manifest.json");
  if (!f) throw DatasetError("no manifest.json in " + split_dir.string());
  return manifest_from_json(nlohmann::json::parse(f));
}

/// Checks that every listed sample exists, loads and keeps the stride, and
/// that no unlisted sample directories are present. Returns the sample count.
inline std::size_t verify_split(const std::filesystem::path& split_dir) {
  namespace fs = std::filesystem;
  const DatasetManifest m = load_manifest(split_dir);
  std::set<std::string> listed;
  for (const auto& e : m.episodes) {
    for (std::size_t i = 0; i < e.samples.size(); ++i) {
      const DatasetSample s = load_sample(split_dir / e.samples[i]);
      if (s.step != static_cast<int>(i) * kSampleStride) throw DatasetError("stride broken in " + e.samples[i]);
      if (s.world_seed != e.world_seed || s.episode != e.episode)
        throw DatasetError(e.samples[i] + " belongs to another episode");
      listed.insert(e.samples[i]);
    }
  }
  std::size_t on_disk = 0;
  for (const auto& entry : fs::recursive_directory_iterator(split_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "meta.json") {
      const std::string rel = fs::relative(entry.path().parent_path(), split_dir).generic_string();
      if (!listed.count(rel)) throw DatasetError("unlisted sample directory " + rel);
      ++on_disk;
    }
  }
  if (on_disk != listed.size()) throw DatasetError("manifest and disk disagree on the sample count");
  return on_disk;
}

struct SplitConfig {
  std::string split = "train";
  int episodes_per_world = 5;
  AgentSpec agent{};
  WorldGenParams world{};
  EpisodeSampling sampling{};
};

/// Default world seeds for a split: 36 train, 4 val, 8 test, disjoint.
inline std::vector<std::uint64_t> default_split_seeds(const std::string& split, int count = -1) {
  std::uint64_t base = 0;
  int n = 0;
  if (split == "train") {
    base = 10000;
    n = 36;
  } else if (split == "val") {
    base = 20000;
    n = 4;
  } else if (split == "test") {
    base = 30000;
    n = 8;
  } else {
    throw DatasetError("unknown split '" + split + "' (expected train, val or test)");
  }
  if (count >= 0) n = count;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

/// Collects `episodes_per_world` episodes in each world into `out / split` and
/// writes its manifest.json.
inline DatasetManifest build_split(const std::vector<std::uint64_t>& world_seeds, const SplitConfig& cfg,
                                   const std::filesystem::path& out) {
  std::set<std::uint64_t> unique(world_seeds.begin(), world_seeds.end());
  if (unique.size() != world_seeds.size()) throw DatasetError("duplicate world seeds");
  if (cfg.episodes_per_world < 1) throw DatasetError("episodes_per_world must be >= 1");
  const std::filesystem::path root = out / cfg.split;
  std::filesystem::create_directories(root);

  DatasetManifest m;
  m.split = cfg.split;
  for (std::uint64_t ws : world_seeds) {
    const WorldGrid world = generate_world(ws, cfg.world);
    for (int e = 0; e < cfg.episodes_per_world; ++e) {
      const auto ei = static_cast<std::uint64_t>(e);
      const EpisodeConfig ep = sample_episode(world, derive_seed({ws, ei, 0x45504953ULL}), cfg.sampling);
      m.episodes.push_back(collect_episode(world, ep, cfg.agent, root, e, derive_seed({ws, ei, 0x52554eULL})).record);
    }
  }
  std::ofstream f(root / "manifest.json");
  if (!f) throw Error("cannot write " + (root / "manifest.json").string());
  f << manifest_to_json(m).dump(2) << '\n';
  return m;
}

}  // namespace objnav
