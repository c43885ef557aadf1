#pragma once

#include <png.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "objnav/harness.hpp"
#include "objnav/wire.hpp"

namespace objnav {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SuiteConfig {
  std::vector<std::uint64_t> world_seeds{30000, 30001, 30002, 30003, 30004, 30005, 30006, 30007};
  int episodes_per_world = 40;
  AgentSpec agent{};
  std::string endpoint;  // remote predictor: "host:port" or a command
  int timeout_ms = wire::kDefaultTimeoutMs;
  WorldGenParams world{};
  EpisodeSampling sampling{};
  int renders = 0;  // how many episodes to draw, in suite order
};

/// Episode layout shared by every agent run on the same seeds.
inline std::uint64_t episode_sampling_seed(std::uint64_t world_seed, int episode) {
  return derive_seed({world_seed, static_cast<std::uint64_t>(episode), 0x45504953ULL});
}
inline std::uint64_t episode_run_seed(std::uint64_t world_seed, int episode) {
  return derive_seed({world_seed, static_cast<std::uint64_t>(episode), 0x52554eULL});
}

inline nlohmann::json config_to_json(const SuiteConfig& c) {
  const AgentSpec& a = c.agent;
  return {
      {"world_seeds", c.world_seeds},
      {"episodes_per_world", c.episodes_per_world},
      {"agent", to_string(a.kind)},
      {"endpoint", c.endpoint},
      {"timeout_ms", c.timeout_ms},
      {"renders", c.renders},
      {"mpc",
       {{"horizon", a.mpc.horizon},
        {"samples", a.mpc.samples},
        {"sigma", a.mpc.sigma},
        {"mu", a.mpc.mu},
        {"lambda", a.mpc.lambda},
        {"q_v", a.mpc.q_v},
        {"q_omega", a.mpc.q_omega},
        {"v_max", a.mpc.limits.v_max},
        {"omega_max", a.mpc.limits.omega_max},
        {"collision", a.mpc.collision == CollisionPricing::Absorbing ? "absorbing" : "per-pose"},
        {"descent_sample", a.mpc.descent_sample}}},
      {"goal",
       {{"theta_cost", a.goal.theta_cost},
        {"done_scale", a.goal.done_scale},
        {"min_region", a.goal.min_region},
        {"inflation", a.goal.inflation}}},
      {"sensor", {{"fov", a.sensor.fov}, {"rays", a.sensor.ray_count}, {"max_range", a.sensor.max_range}}},
      {"frontier", {{"min_distance", a.frontier.min_distance}, {"min_region", a.frontier.min_region}}},
      {"theta_occ", a.theta_occ},
      {"inflation", a.inflation},
      {"world", {{"width", c.world.width}, {"height", c.world.height}, {"rooms", c.world.room_count},
                 {"object_density", c.world.object_density}}},
      {"episode",
       {{"max_steps", c.sampling.max_steps},
        {"dt", c.sampling.dt},
        {"success_distance", c.sampling.success_distance},
        {"min_start_distance", c.sampling.min_start_distance}}},
  };
}

/// Reads a suite config; keys that are absent keep their defaults.
inline SuiteConfig config_from_json(const nlohmann::json& j, SuiteConfig c = {}) {
  auto get = [](const nlohmann::json& o, const char* key, auto& dst) {
    if (o.is_object() && o.contains(key)) dst = o.at(key).get<std::remove_reference_t<decltype(dst)>>();
  };
  try {
    get(j, "world_seeds", c.world_seeds);
    get(j, "episodes_per_world", c.episodes_per_world);
    if (j.contains("agent")) c.agent.kind = parse_agent(j.at("agent").get<std::string>());
    get(j, "endpoint", c.endpoint);
    get(j, "timeout_ms", c.timeout_ms);
    get(j, "renders", c.renders);
    AgentSpec& a = c.agent;
    if (j.contains("mpc")) {
      const auto& m = j.at("mpc");
      get(m, "horizon", a.mpc.horizon);
      get(m, "samples", a.mpc.samples);
      get(m, "sigma", a.mpc.sigma);
      get(m, "mu", a.mpc.mu);
      get(m, "lambda", a.mpc.lambda);
      get(m, "q_v", a.mpc.q_v);
      get(m, "q_omega", a.mpc.q_omega);
      get(m, "v_max", a.mpc.limits.v_max);
      get(m, "omega_max", a.mpc.limits.omega_max);
      if (m.contains("omega_max")) a.mpc.limits.omega_min = -a.mpc.limits.omega_max;
      if (m.contains("collision")) {
        const auto s = m.at("collision").get<std::string>();
        if (s == "absorbing")
          a.mpc.collision = CollisionPricing::Absorbing;
        else if (s == "per-pose")
          a.mpc.collision = CollisionPricing::PerPose;
        else
          throw Error("unknown collision pricing '" + s + "'");
      }
      get(m, "descent_sample", a.mpc.descent_sample);
    }
    if (j.contains("goal")) {
      const auto& g = j.at("goal");
      get(g, "theta_cost", a.goal.theta_cost);
      get(g, "done_scale", a.goal.done_scale);
      get(g, "min_region", a.goal.min_region);
      get(g, "inflation", a.goal.inflation);
    }
    if (j.contains("sensor")) {
      get(j.at("sensor"), "fov", a.sensor.fov);
      get(j.at("sensor"), "rays", a.sensor.ray_count);
      get(j.at("sensor"), "max_range", a.sensor.max_range);
    }
    if (j.contains("frontier")) {
      get(j.at("frontier"), "min_distance", a.frontier.min_distance);
      get(j.at("frontier"), "min_region", a.frontier.min_region);
    }
    get(j, "theta_occ", a.theta_occ);
    get(j, "inflation", a.inflation);
    if (j.contains("world")) {
      get(j.at("world"), "width", c.world.width);
      get(j.at("world"), "height", c.world.height);
      get(j.at("world"), "rooms", c.world.room_count);
      get(j.at("world"), "object_density", c.world.object_density);
    }
    if (j.contains("episode")) {
      get(j.at("episode"), "max_steps", c.sampling.max_steps);
      get(j.at("episode"), "dt", c.sampling.dt);
      get(j.at("episode"), "success_distance", c.sampling.success_distance);
      get(j.at("episode"), "min_start_distance", c.sampling.min_start_distance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad suite config: ") + e.what());
  }
  return c;
}

inline SuiteConfig load_suite_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct TargetStats {
  int episodes = 0;
  double sr = 0.0;
  double spl = 0.0;
  double dts = 0.0;
};

struct SuiteReport {
  nlohmann::json config;
  int episodes = 0;
  int failures = 0;  // aborted by an error
  double sr = 0.0;
  double spl = 0.0;
  double dts = 0.0;
  double time_steps = 0.0;
  double time_seconds = 0.0;
  Smoothness smooth;
  std::map<std::string, TargetStats> per_target;
  std::vector<EpisodeResult> results;
};

/// Aggregates stored episode results; the same results always give the same
/// report.
inline SuiteReport summarize(std::vector<EpisodeResult> results, nlohmann::json config = {}) {
  if (results.empty()) throw Error("summarize: no episodes");
  SuiteReport r;
  r.config = std::move(config);
  r.episodes = static_cast<int>(results.size());
  const double n = static_cast<double>(results.size());
  for (const auto& e : results) {
    r.failures += e.failed ? 1 : 0;
    r.sr += e.success ? 1.0 : 0.0;
    r.spl += spl_term(e);
    r.dts += e.dts;
    r.time_steps += e.steps;
    r.time_seconds += e.steps * e.dt;
    const Smoothness s = smoothness(e.history, e.dt);
    r.smooth.acc_linear += s.acc_linear;
    r.smooth.acc_angular += s.acc_angular;
    r.smooth.jerk_linear += s.jerk_linear;
    r.smooth.jerk_angular += s.jerk_angular;
    TargetStats& t = r.per_target[std::string(to_string(e.target))];
    ++t.episodes;
    t.sr += e.success ? 1.0 : 0.0;
    t.spl += spl_term(e);
    t.dts += e.dts;
  }
  r.sr /= n;
  r.spl /= n;
  r.dts /= n;
  r.time_steps /= n;
  r.time_seconds /= n;
  r.smooth.acc_linear /= n;
  r.smooth.acc_angular /= n;
  r.smooth.jerk_linear /= n;
  r.smooth.jerk_angular /= n;
  for (auto& [_, t] : r.per_target) {
    t.sr /= t.episodes;
    t.spl /= t.episodes;
    t.dts /= t.episodes;
  }
  r.results = std::move(results);
  return r;
}

inline nlohmann::json report_to_json(const SuiteReport& r) {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& [name, t] : r.per_target)
    targets[name] = {{"episodes", t.episodes}, {"sr", t.sr}, {"spl", t.spl}, {"dts", t.dts}};
  return {{"episodes", r.episodes},
          {"failures", r.failures},
          {"sr", r.sr},
          {"spl", r.spl},
          {"dts", r.dts},
          {"time_steps", r.time_steps},
          {"time_seconds", r.time_seconds},
          {"acc_linear", r.smooth.acc_linear},
          {"acc_angular", r.smooth.acc_angular},
          {"jerk_linear", r.smooth.jerk_linear},
          {"jerk_angular", r.smooth.jerk_angular},
          {"per_target", targets},
          {"config", r.config}};
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// One row per episode, fixed-precision, in suite order.
inline std::string episodes_csv(const std::vector<EpisodeResult>& results) {
  std::string out =
      "world_seed,episode,target,start_x,start_y,start_theta,provider,success,declared_done,failed,steps,time_s,"
      "path_length,shortest_length,final_distance,dts,spl,acc_linear,acc_angular,jerk_linear,jerk_angular,"
      "failure_reason\n";
  char buf[512];
  for (const auto& e : results) {
    const Smoothness s = smoothness(e.history, e.dt);
    std::snprintf(buf, sizeof buf,
                  "%llu,%d,%s,%.6f,%.6f,%.6f,%s,%d,%d,%d,%d,%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,",
                  static_cast<unsigned long long>(e.world_seed), e.episode_index, std::string(to_string(e.target)).c_str(),
                  e.start.x, e.start.y, e.start.theta, e.provider.c_str(), e.success ? 1 : 0, e.declared_done ? 1 : 0,
                  e.failed ? 1 : 0, e.steps, e.steps * e.dt, e.path_length, e.shortest_length, e.final_distance, e.dts,
                  spl_term(e), s.acc_linear, s.acc_angular, s.jerk_linear, s.jerk_angular);
    out += buf;
    out += csv_field(e.failure_reason);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}
  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

inline void write_png(const std::string& path, const Image& img) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw Error("PNG encoding failed: " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.rgb[static_cast<std::size_t>(y) * img.width * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

/// Top-down picture of the true map with the episode's path; north is up.
inline Image render_episode(const WorldGrid& world, const EpisodeResult& r, int scale = 3) {
  Image img(world.width() * scale, world.height() * scale);
  auto fill_cell = [&](int x, int y, std::array<std::uint8_t, 3> c) {
    for (int dy = 0; dy < scale; ++dy)
      for (int dx = 0; dx < scale; ++dx) img.set(x * scale + dx, (world.height() - 1 - y) * scale + dy, c);
  };
  for (int y = 0; y < world.height(); ++y) {
    for (int x = 0; x < world.width(); ++x) {
      const CellClass c = world.cells(x, y);
      if (c == CellClass::Obstacle)
        fill_cell(x, y, {60, 60, 60});
      else if (c == r.target)
        fill_cell(x, y, {220, 50, 50});
      else if (!is_free(c))
        fill_cell(x, y, {200, 170, 120});
    }
  }
  auto dot = [&](double wx, double wy, std::array<std::uint8_t, 3> c, int radius) {
    const int px = static_cast<int>(wx / world.resolution * scale);
    const int py = static_cast<int>((world.height() - wy / world.resolution) * scale);
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy <= radius * radius) img.set(px + dx, py + dy, c);
  };
  for (const AgentState& s : r.trajectory) dot(s.x, s.y, {40, 90, 220}, 1);
  dot(r.start.x, r.start.y, {30, 170, 60}, 4);
  dot(r.final_pose.x, r.final_pose.y, r.success ? std::array<std::uint8_t, 3>{30, 170, 60}
                                                  : std::array<std::uint8_t, 3>{200, 0, 200}, 4);
  return img;
}

// ---------------------------------------------------------------------------
// Suite runner
// ---------------------------------------------------------------------------

inline AgentSpec resolved_agent(const SuiteConfig& c) {
  AgentSpec a = c.agent;
  if (a.kind == AgentKind::Remote && !a.provider_factory) {
    if (c.endpoint.empty()) throw Error("remote agent needs an endpoint");
    a.provider_factory = [endpoint = c.endpoint, t = c.timeout_ms]() -> std::unique_ptr<CostMapProvider> {
      return std::make_unique<wire::RemoteProvider>(endpoint, t);
    };
  }
  return a;
}

using EpisodeCallback = std::function<void(const EpisodeResult&)>;

/// Runs every (world, episode) pair in order; an episode that cannot be set up
/// is recorded as failed and the suite continues. Renders, when requested, go
/// to `render_dir`.
inline SuiteReport run_suite(const SuiteConfig& cfg, const EpisodeCallback& on_episode = {},
                             const std::filesystem::path& render_dir = {}) {
  if (cfg.world_seeds.empty() || cfg.episodes_per_world < 1) throw Error("suite has no episodes");
  const AgentSpec agent = resolved_agent(cfg);
  std::vector<EpisodeResult> results;
  int rendered = 0;
  for (std::uint64_t ws : cfg.world_seeds) {
    const WorldGrid world = generate_world(ws, cfg.world);
    std::map<CellClass, Grid<double>> fields;
    std::unique_ptr<CostMapProvider> provider;
    for (int e = 0; e < cfg.episodes_per_world; ++e) {
      EpisodeResult r;
      try {
        const EpisodeConfig ep = sample_episode(world, episode_sampling_seed(ws, e), cfg.sampling);
        auto it = fields.find(ep.target);
        if (it == fields.end()) it = fields.emplace(ep.target, target_distance(world, ep.target)).first;
        if (!provider && agent.kind != AgentKind::Random) provider = make_provider(agent);
        r = run_episode(world, ep, agent, episode_run_seed(ws, e), {}, e, provider.get(), &it->second);
      } catch (const std::exception& ex) {
        r.world_seed = ws;
        r.episode_index = e;
        r.failed = true;
        r.failure_reason = ex.what();
        r.provider = to_string(agent.kind);
        r.dt = cfg.sampling.dt;
      }
      if (rendered < cfg.renders && !render_dir.empty() && !r.trajectory.empty()) {
        std::filesystem::create_directories(render_dir);
        write_png((render_dir / ("w" + std::to_string(ws) + "_e" + std::to_string(e) + ".png")).string(),
                  render_episode(world, r));
        ++rendered;
      }
      if (on_episode) on_episode(r);
      results.push_back(std::move(r));
    }
  }
  return summarize(std::move(results), config_to_json(cfg));
}

/// Writes summary.json, episodes.csv and (already rendered) renders/ under `dir`.
inline void write_report(const SuiteReport& r, const std::filesystem::path& dir, double wall_seconds = -1.0) {
  std::filesystem::create_directories(dir);
  nlohmann::json summary = report_to_json(r);
  if (wall_seconds >= 0.0) summary["wall_seconds"] = wall_seconds;
  std::ofstream s(dir / "summary.json");
  if (!s) throw Error("cannot write " + (dir / "summary.json").string());
  s << summary.dump(2) << '\n';
  std::ofstream c(dir / "episodes.csv", std::ios::binary);
  if (!c) throw Error("cannot write " + (dir / "episodes.csv").string());
  c << episodes_csv(r.results);
}

}  // namespace objnav
