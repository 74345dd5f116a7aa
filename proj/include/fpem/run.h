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

#ifndef FPEM_RUN_H_
#define FPEM_RUN_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fpem/baselines.h"
#include "fpem/eval.h"
#include "fpem/fpem.h"
#include "fpem/game.h"
#include "fpem/treasure.h"

// Run orchestration behind the command line: configuration files, run
// directories with per-iteration checkpoints, and metrics.
namespace fpem::run {

struct RunConfig {
  std::string algo = "fpem";  // fpem, fpemv1, nfsp, smv1, smv2, oppo, psro
  std::string game = "kuhn";  // kuhn, treasure
  std::vector<std::uint64_t> seeds = {0};
  int workers = 0;            // 0 keeps the OpenMP default
  std::string out = "runs/default";
  std::int64_t eval_episodes = 10000;

  // Shared by every algorithm: iterations, solvers and the selector.
  core::FpemConfig fpem;
  treasure::TreasureConfig treasure;
  baselines::NfspConfig nfsp;  // best-response solver comes from fpem.max_solver
  int pool_capacity = 10;      // SMv2
  baselines::PsroConfig psro;  // solver comes from fpem.max_solver
  eval::AdversaryConfig adversary;  // solver comes from fpem.max_solver

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Desk-scale defaults for a game.
RunConfig default_config(const std::string& game);

// Sets one "section.key" entry; throws ConfigError for unknown keys or
// unparsable values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
// Applies "key=value" lines; '#' starts a comment.
void apply_config_text(RunConfig& config, const std::string& text);
// Every key, one "key=value" per line, in a fixed order.
std::string serialize(const RunConfig& config);

std::unique_ptr<Environment> make_game(const RunConfig& config);

// Solver settings used by each algorithm component.
baselines::NfspConfig nfsp_config(const RunConfig& config);
baselines::IteratedConfig iterated_config(const RunConfig& config);
baselines::PsroConfig psro_config(const RunConfig& config);
eval::AdversaryConfig adversary_config(const RunConfig& config);

// Run directory layout:
//   manifest.txt                 effective configuration
//   metrics.csv                  training rows, then appended evaluation rows
//   seed_<s>/progress.txt        completed=<t>
//   seed_<s>/iter_<t>/           checkpoints of iteration t
//     max_strategy.txt, min_strategy.txt  "<kind> <file> <weight>" lines
//     row.csv                    the iteration's training metrics row
std::string iteration_dir(const std::string& out, std::uint64_t seed, int iteration);
int completed_iterations(const std::string& out, std::uint64_t seed);

// Trains every seed, resuming after the last completed iteration, and
// rewrites metrics.csv from the per-iteration rows.
void train(const RunConfig& config);

RunConfig load_manifest(const std::string& run_dir);

// Mixed strategy saved for a seat of an iteration. Throws FormatError
// listing the expected files when some are missing.
MixedStrategy load_strategy(const RunConfig& config, const Environment& game,
                            const std::string& iter_dir, Player seat);

enum class EvalKind { kNashConv, kExploit, kHeadToHead };
EvalKind parse_eval_kind(const std::string& name);

// Appends evaluation rows to the run's metrics.csv and returns them.
// Head-to-head needs a second run directory on the same game and plays the
// final max-player models of matching seeds.
std::vector<eval::MetricsRecord> evaluate(const std::string& run_dir, EvalKind kind,
                                          const std::string& against = "",
                                          std::int64_t eval_episodes = 0);

// Read-only summary of a checkpoint file, iteration directory or run.
std::string inspect(const std::string& path);

}  // namespace fpem::run

#endif  // FPEM_RUN_H_
