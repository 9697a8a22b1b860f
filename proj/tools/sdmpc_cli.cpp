// Copyright 2026 The sdmpc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Batch experiment frontend: closed-loop simulation, the smallest-horizon
// table, the phase-portrait runs, certification reports, kernel geometry,
// and cartesian sweeps.  Artifacts are deterministic CSV/JSON.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 reference mismatch (acceptance mode only).

#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "sdmpc/experiments.hpp"

namespace {

sdmpc::Config load_or_default(const std::string& config_path) {
  if (!config_path.empty()) return sdmpc::Config::load(config_path);
  return sdmpc::Config::parse("[system]\nname = double_integrator\n", "<default>");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdmpc: sampled-data MPC simulation and horizon certification"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path, out_dir;
  int jobs = int(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  bool acceptance = false;
  app.add_option("--config", config_path, "configuration file (structured text)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default: out/<command>)");
  app.add_option("--jobs", jobs, "worker pool size")->check(CLI::PositiveNumber);
  app.add_flag("--acceptance", acceptance,
               "compare against the published reference values; mismatch exits 4");

  using Cmd = std::function<sdmpc::CommandOutcome(const sdmpc::Config&, const std::string&,
                                                  int, bool)>;
  struct Entry {
    const char* name;
    const char* help;
    Cmd fn;
  };
  const Entry entries[] = {
      {"simulate", "one closed-loop run from a config-supplied start state",
       sdmpc::cmd_simulate},
      {"table1", "smallest stabilizing horizon over the benchmark (x0, delta) grid",
       sdmpc::cmd_table1},
      {"figure1", "the four benchmark phase-portrait runs plus the boundary polyline",
       sdmpc::cmd_figure1},
      {"certify", "Riccati constants, sublevel constants, and the minimal certified horizon",
       sdmpc::cmd_certify},
      {"viability", "admissible-set geometry: barrier polyline and grid inner approximation",
       sdmpc::cmd_viability},
      {"sweep", "cartesian (x0, delta, N) closed-loop study", sdmpc::cmd_sweep},
  };
  const Entry* chosen = nullptr;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->callback([&chosen, &e]() { chosen = &e; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    sdmpc::Config cfg = load_or_default(config_path);
    sdmpc::CommandOutcome oc = chosen->fn(cfg, out_dir, jobs, acceptance);
    std::printf("%s\n", oc.message.c_str());
    return oc.exit_code;
  } catch (const sdmpc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
