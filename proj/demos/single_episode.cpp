// Runs one episode with the ground-truth cost map and prints where it ended.
#include <cstdio>
#include <cstdlib>

#include "objnav/suite.hpp"

int main(int argc, char** argv) {
  const std::uint64_t world_seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const objnav::WorldGrid world = objnav::generate_world(world_seed);
  const objnav::EpisodeConfig ep = objnav::sample_episode(world, objnav::episode_sampling_seed(world_seed, 0));

  objnav::AgentSpec agent;
  const objnav::EpisodeResult r = objnav::run_episode(world, ep, agent, objnav::episode_run_seed(world_seed, 0));

  std::printf("target %s, start (%.2f, %.2f)\n", std::string(objnav::to_string(ep.target)).c_str(), ep.start.x,
              ep.start.y);
  std::printf("%s after %d steps, path %.2f m, shortest %.2f m, spl %.3f\n", r.success ? "success" : "failure",
              r.steps, r.path_length, r.shortest_length, objnav::spl_term(r));
  objnav::write_png("episode.png", objnav::render_episode(world, r));
  std::printf("wrote episode.png\n");
}
