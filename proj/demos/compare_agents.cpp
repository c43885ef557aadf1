// Small benchmark of the built-in agents on a few worlds.
#include <cstdio>

#include "objnav/suite.hpp"

int main() {
  for (objnav::AgentKind kind : {objnav::AgentKind::Gt, objnav::AgentKind::Frontier, objnav::AgentKind::Random}) {
    objnav::SuiteConfig cfg;
    cfg.world_seeds = {30000, 30001, 30002};
    cfg.episodes_per_world = 3;
    cfg.agent.kind = kind;
    const objnav::SuiteReport r = objnav::run_suite(cfg);
    std::printf("%-9s SR %.3f  SPL %.3f  DTS %.2f m\n", objnav::to_string(kind).c_str(), r.sr, r.spl, r.dts);
  }
}
