// objnav command-line tool: world generation, single episodes, navigation and
// prediction evaluation, dataset collection and the stub predictor.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "objnav/dataset.hpp"
#include "objnav/evaluation.hpp"
#include "objnav/harness.hpp"
#include "objnav/suite.hpp"
#include "objnav/wire.hpp"
#include "objnav/world.hpp"

using namespace objnav;

namespace {

/// Flags shared by every command that drives the agent. Values start out as
/// the defaults (or a config file) and are overwritten only when given.
struct AgentFlags {
  std::string agent;
  std::string config;
  std::string endpoint;
  int timeout_ms = wire::kDefaultTimeoutMs;
  MpcConfig mpc;
  double theta_cost = 0.2;
  int max_steps = 500;

  void add(CLI::App* cmd, bool with_agent = true) {
    if (with_agent) cmd->add_option("--agent", agent, "gt, frontier, random or remote");
    cmd->add_option("--config", config, "JSON config file; flags override its values");
    cmd->add_option("--endpoint", endpoint, "remote predictor: host:port or a command to spawn");
    cmd->add_option("--timeout-ms", timeout_ms, "remote predictor reply timeout")->capture_default_str();
    cmd->add_option("--horizon", mpc.horizon, "MPC horizon (steps)")->capture_default_str();
    cmd->add_option("--samples", mpc.samples, "MPC rollouts per step")->capture_default_str();
    cmd->add_option("--lambda", mpc.lambda, "MPC temperature")->capture_default_str();
    cmd->add_option("--sigma", mpc.sigma, "MPC perturbation std")->capture_default_str();
    cmd->add_option("--q-v", mpc.q_v, "control cost on v^2")->capture_default_str();
    cmd->add_option("--q-omega", mpc.q_omega, "control cost on omega^2")->capture_default_str();
    cmd->add_option("--theta-cost", theta_cost, "goal reacher done threshold")->capture_default_str();
    cmd->add_option("--max-steps", max_steps, "step budget per episode")->capture_default_str();
  }

  /// Suite config from the file (if any) with explicitly given flags on top.
  SuiteConfig resolve(CLI::App* cmd, SuiteConfig base = {}) const {
    SuiteConfig c = config.empty() ? base : load_suite_config(config);
    auto given = [cmd](const char* flag) { return cmd->count(flag) > 0; };
    if (!agent.empty()) c.agent.kind = parse_agent(agent);
    if (given("--endpoint")) c.endpoint = endpoint;
    if (given("--timeout-ms")) c.timeout_ms = timeout_ms;
    if (given("--horizon")) c.agent.mpc.horizon = mpc.horizon;
    if (given("--samples")) c.agent.mpc.samples = mpc.samples;
    if (given("--lambda")) c.agent.mpc.lambda = mpc.lambda;
    if (given("--sigma")) c.agent.mpc.sigma = mpc.sigma;
    if (given("--q-v")) c.agent.mpc.q_v = mpc.q_v;
    if (given("--q-omega")) c.agent.mpc.q_omega = mpc.q_omega;
    if (given("--theta-cost")) c.agent.goal.theta_cost = theta_cost;
    if (given("--max-steps")) c.sampling.max_steps = max_steps;
    c.agent.mpc.validate();
    return c;
  }
};

nlohmann::json result_json(const EpisodeResult& r) {
  const Smoothness s = smoothness(r.history, r.dt);
  return {{"world_seed", r.world_seed},
          {"target", to_string(r.target)},
          {"provider", r.provider},
          {"success", r.success},
          {"declared_done", r.declared_done},
          {"failed", r.failed},
          {"failure_reason", r.failure_reason},
          {"steps", r.steps},
          {"time_s", r.steps * r.dt},
          {"path_length", r.path_length},
          {"shortest_length", r.shortest_length},
          {"final_distance", r.final_distance},
          {"dts", r.dts},
          {"spl", spl_term(r)},
          {"start", {r.start.x, r.start.y, r.start.theta}},
          {"final", {r.final_pose.x, r.final_pose.y, r.final_pose.theta}},
          {"acc_linear", s.acc_linear},
          {"acc_angular", s.acc_angular},
          {"jerk_linear", s.jerk_linear},
          {"jerk_angular", s.jerk_angular}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-goal navigation on procedural 2D semantic worlds"};
  app.require_subcommand(1);

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "Generate a world and save it as JSON");
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  WorldGenParams gen_params;
  gen->add_option("--seed", gen_seed, "world seed")->required();
  gen->add_option("--out", gen_out, "output JSON file")->required();
  gen->add_option("--width", gen_params.width, "cells")->capture_default_str();
  gen->add_option("--height", gen_params.height, "cells")->capture_default_str();
  gen->add_option("--rooms", gen_params.room_count, "room count")->capture_default_str();
  gen->add_option("--object-density", gen_params.object_density, "furniture density")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Run one episode and print its result as JSON");
  AgentFlags run_flags;
  run_flags.agent = "gt";
  run_flags.add(run);
  std::uint64_t run_world = 0;
  std::string run_world_file;
  std::string run_target;
  int run_episode_index = 0;
  std::string run_render;
  run->add_option("--world-seed", run_world, "world seed");
  run->add_option("--world", run_world_file, "world JSON file (instead of --world-seed)");
  run->add_option("--target", run_target, "bed, chair, sink, plant or couch (default: sampled)");
  run->add_option("--episode", run_episode_index, "episode index used to sample the start")->capture_default_str();
  run->add_option("--render", run_render, "write a PNG of the trajectory");

  // eval-nav
  auto* nav = app.add_subcommand("eval-nav", "Run a navigation suite and write a report");
  AgentFlags nav_flags;
  nav_flags.add(nav);
  std::string nav_suite;
  std::string nav_out = "report";
  int nav_worlds = -1;
  int nav_episodes = -1;
  int nav_renders = -1;
  nav->add_option("--suite", nav_suite, "suite JSON config");
  nav->add_option("--out", nav_out, "report directory")->capture_default_str();
  nav->add_option("--worlds", nav_worlds, "use the first N default test worlds");
  nav->add_option("--episodes-per-world", nav_episodes, "episodes per world");
  nav->add_option("--renders", nav_renders, "number of episodes to render");

  // eval-pred
  auto* pred = app.add_subcommand("eval-pred", "Score a predictor on a dataset split");
  std::string pred_data;
  std::string pred_kind = "remote";
  std::string pred_endpoint;
  std::string pred_out;
  std::size_t pred_limit = 0;
  int pred_timeout = wire::kDefaultTimeoutMs;
  pred->add_option("--data", pred_data, "split directory containing manifest.json")->required();
  pred->add_option("--predictor", pred_kind, "gt, frontier or remote")->capture_default_str();
  pred->add_option("--endpoint", pred_endpoint, "remote predictor: host:port or a command");
  pred->add_option("--timeout-ms", pred_timeout, "reply timeout")->capture_default_str();
  pred->add_option("--out", pred_out, "CSV file (default: stdout)");
  pred->add_option("--limit", pred_limit, "score at most N samples (0 = all)");

  // collect
  auto* col = app.add_subcommand("collect", "Collect expert samples for a dataset split");
  AgentFlags col_flags;
  col_flags.add(col, false);
  std::string col_split = "train";
  int col_worlds = -1;
  int col_episodes = 5;
  std::string col_out = "data";
  std::vector<std::uint64_t> col_seeds;
  col->add_option("--split", col_split, "train, val or test")->capture_default_str();
  col->add_option("--worlds", col_worlds, "number of worlds (default 36/4/8 by split)");
  col->add_option("--seeds", col_seeds, "explicit world seeds");
  col->add_option("--episodes-per-world", col_episodes, "episodes per world")->capture_default_str();
  col->add_option("--out", col_out, "dataset root")->capture_default_str();

  // serve-stub
  auto* stub = app.add_subcommand("serve-stub", "Serve the bundled stub predictor");
  std::string stub_mode = "uniform";
  int stub_port = -1;
  stub->add_option("--mode", stub_mode, "uniform, echo, bad-shape, bad-range, silent, drop-once")
      ->capture_default_str();
  stub->add_option("--port", stub_port, "listen on 127.0.0.1:PORT (default: speak on stdin/stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      save_world(generate_world(gen_seed, gen_params), gen_out);
      std::cout << gen_out << '\n';
    } else if (*run) {
      const SuiteConfig cfg = run_flags.resolve(run);
      const WorldGrid world = run_world_file.empty() ? generate_world(run_world, cfg.world) : load_world(run_world_file);
      EpisodeSampling sampling = cfg.sampling;
      if (!run_target.empty()) sampling.target = parse_target(run_target);
      const EpisodeConfig ep = sample_episode(world, episode_sampling_seed(world.seed, run_episode_index), sampling);
      const AgentSpec agent = resolved_agent(cfg);
      const EpisodeResult r = run_episode(world, ep, agent, episode_run_seed(world.seed, run_episode_index), {},
                                          run_episode_index);
      if (!run_render.empty()) write_png(run_render, render_episode(world, r));
      std::cout << result_json(r).dump(2) << '\n';
      return r.failed ? 2 : 0;
    } else if (*nav) {
      SuiteConfig base;
      if (!nav_suite.empty()) base = load_suite_config(nav_suite);
      if (!nav_flags.config.empty() && !nav_suite.empty()) throw Error("give either --suite or --config");
      SuiteConfig cfg = nav_flags.resolve(nav, base);
      if (nav_worlds >= 0) cfg.world_seeds = default_split_seeds("test", nav_worlds);
      if (nav_episodes >= 0) cfg.episodes_per_world = nav_episodes;
      if (nav_renders >= 0) cfg.renders = nav_renders;
      const auto t0 = std::chrono::steady_clock::now();
      int done = 0;
      const int total = static_cast<int>(cfg.world_seeds.size()) * cfg.episodes_per_world;
      const SuiteReport rep = run_suite(
          cfg,
          [&](const EpisodeResult& r) {
            std::fprintf(stderr, "[%d/%d] world %llu episode %d %s %s\n", ++done, total,
                         static_cast<unsigned long long>(r.world_seed), r.episode_index,
                         std::string(to_string(r.target)).c_str(),
                         r.failed ? ("failed: " + r.failure_reason).c_str() : (r.success ? "success" : "miss"));
          },
          std::filesystem::path(nav_out) / "renders");
      write_report(rep, nav_out,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      std::printf("SR %.3f  SPL %.3f  DTS %.3f m  time %.1f steps (%.1f s)  -> %s\n", rep.sr, rep.spl, rep.dts,
                  rep.time_steps, rep.time_seconds, nav_out.c_str());
    } else if (*pred) {
      SamplePredictor p(parse_agent(pred_kind), pred_endpoint, pred_timeout);
      const std::string csv = evaluate_split_csv(pred_data, p, pred_limit);
      if (pred_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream f(pred_out);
        if (!f) throw Error("cannot write " + pred_out);
        f << csv;
      }
    } else if (*col) {
      SplitConfig sc;
      sc.split = col_split;
      sc.episodes_per_world = col_episodes;
      const SuiteConfig agent_cfg = col_flags.resolve(col);
      sc.agent = agent_cfg.agent;
      sc.sampling = agent_cfg.sampling;
      const auto seeds = col_seeds.empty() ? default_split_seeds(col_split, col_worlds) : col_seeds;
      const DatasetManifest m = build_split(seeds, sc, col_out);
      std::printf("%s: %zu episodes, %zu samples -> %s\n", m.split.c_str(), m.episodes.size(), m.sample_count(),
                  (std::filesystem::path(col_out) / col_split).string().c_str());
    } else if (*stub) {
      const wire::StubMode mode = wire::parse_stub_mode(stub_mode);
      if (stub_port >= 0) {
        wire::StubServer server(mode, stub_port);
        std::printf("listening on %s\n", server.endpoint().c_str());
        std::fflush(stdout);
        for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
      }
      wire::LineChannel ch(STDIN_FILENO, STDOUT_FILENO, false, false);
      wire::serve_channel(ch, mode);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
