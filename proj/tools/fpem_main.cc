// Copyright 2026 The FPEM Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command line for training, evaluating and inspecting runs.
//
//   fpem train   [--algo A] [--game G] [--config FILE] [--seed S[,S...]]
//                [--workers N] [--out DIR] [--iterations T]
//                [--episodes-per-iter N] [--eval-episodes N] [--set key=value]...
//   fpem eval    --out DIR --mode nashconv|exploit|h2h [--against DIR]
//                [--eval-episodes N] [--workers N]
//   fpem inspect PATH
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
// FPEM_LOG_LEVEL selects the log level (trace, debug, info, warn, error, off).

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fpem/errors.h"
#include "fpem/rollout.h"
#include "fpem/run.h"

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

void setup_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fpem"));
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  const char* level = std::getenv("FPEM_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fpem::ConfigError("--config", "cannot read " + path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Game named by a config file, so its defaults apply before the file does.
std::string game_in(const std::string& text) {
  std::stringstream s(text);
  std::string line;
  std::string game;
  while (std::getline(s, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto trim = [](std::string& x) {
      x.erase(0, x.find_first_not_of(" \t\r"));
      x.erase(x.find_last_not_of(" \t\r") + 1);
    };
    trim(key);
    trim(value);
    if (key == "run.game") game = value;
  }
  return game;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"FPEM: fictitious play with expanding models"};
  app.require_subcommand(1);

  struct {
    std::string algo, game, config, seed, out;
    int workers = -1, iterations = 0;
    std::int64_t episodes_per_iter = 0, eval_episodes = 0;
    std::vector<std::string> settings;
  } t;
  CLI::App* train = app.add_subcommand("train", "train a run, resuming after its last finished iteration");
  train->add_option("--algo", t.algo, "fpem, fpemv1, nfsp, smv1, smv2, oppo or psro");
  train->add_option("--game", t.game, "kuhn or treasure");
  train->add_option("--config", t.config, "key=value configuration file");
  train->add_option("--seed", t.seed, "seed or comma-separated seeds");
  train->add_option("--workers", t.workers, "OpenMP workers for episode collection (0 = default)");
  train->add_option("--out", t.out, "run directory");
  train->add_option("--iterations", t.iterations, "iterations T");
  train->add_option("--episodes-per-iter", t.episodes_per_iter, "episodes per best response");
  train->add_option("--eval-episodes", t.eval_episodes, "episodes per evaluation");
  train->add_option("--set", t.settings, "extra key=value override");

  struct {
    std::string out, mode, against;
    std::int64_t eval_episodes = 0;
    int workers = -1;
  } e;
  CLI::App* evaluate = app.add_subcommand("eval", "append evaluation rows to a run's metrics.csv");
  evaluate->add_option("--out", e.out, "run directory")->required();
  evaluate->add_option("--mode", e.mode, "nashconv, exploit or h2h")->required();
  evaluate->add_option("--against", e.against, "second run directory for h2h");
  evaluate->add_option("--eval-episodes", e.eval_episodes, "episodes per evaluation");
  evaluate->add_option("--workers", e.workers, "OpenMP workers (0 = default)");

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a checkpoint, iteration or run directory");
  inspect->add_option("path", inspect_path, "checkpoint file or directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*train) {
      const std::string text = t.config.empty() ? std::string() : read_text(t.config);
      std::string game = t.game.empty() ? game_in(text) : t.game;
      if (game.empty()) game = "kuhn";
      fpem::run::RunConfig config = fpem::run::default_config(game);
      fpem::run::apply_config_text(config, text);
      using fpem::run::apply_setting;
      if (!t.game.empty()) apply_setting(config, "run.game", t.game);
      if (!t.algo.empty()) apply_setting(config, "run.algo", t.algo);
      if (!t.seed.empty()) apply_setting(config, "run.seeds", t.seed);
      if (t.workers >= 0) apply_setting(config, "run.workers", std::to_string(t.workers));
      if (!t.out.empty()) apply_setting(config, "run.out", t.out);
      if (t.iterations > 0) apply_setting(config, "run.iterations", std::to_string(t.iterations));
      if (t.episodes_per_iter > 0) {
        apply_setting(config, "max_solver.episodes", std::to_string(t.episodes_per_iter));
        apply_setting(config, "min_solver.episodes", std::to_string(t.episodes_per_iter));
      }
      if (t.eval_episodes > 0) apply_setting(config, "run.eval_episodes", std::to_string(t.eval_episodes));
      for (const std::string& kv : t.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw fpem::ConfigError("--set", "expected key=value, got '" + kv + "'");
        apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
      }
      config.validate();
      spdlog::info("training {} on {} into {}", config.algo, config.game, config.out);
      spdlog::debug("effective configuration:\n{}", fpem::run::serialize(config));
      fpem::run::train(config);
      spdlog::info("metrics written to {}/metrics.csv", config.out);
    } else if (*evaluate) {
      if (e.workers > 0) fpem::set_worker_count(e.workers);
      const auto rows = fpem::run::evaluate(e.out, fpem::run::parse_eval_kind(e.mode), e.against, e.eval_episodes);
      spdlog::info("appended {} rows to {}/metrics.csv", rows.size(), e.out);
    } else if (*inspect) {
      std::cout << fpem::run::inspect(inspect_path);
    }
  } catch (const fpem::ConfigError& err) {
    spdlog::error("{}", err.what());
    return kUsage;
  } catch (const fpem::FormatError& err) {
    spdlog::error("corrupt or missing checkpoint: {}", err.what());
    return kRuntime;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return kRuntime;
  }
  return 0;
}
