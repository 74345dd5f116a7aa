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

#ifndef FPEM_EVAL_H_
#define FPEM_EVAL_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fpem/fpem.h"
#include "fpem/game.h"
#include "fpem/rl.h"

// Measurement: exact NashConv on Kuhn, exploitation by retrained
// adversaries, head-to-head matches and the metrics CSV.
namespace fpem::eval {

// How stored Q policies act at evaluation time.
enum class EvalMode { kGreedy, kEpsilonGreedy, kStochastic };

// Copies Q policies (also inside FPEM mixtures) with epsilon 0 (greedy),
// epsilon (epsilon-greedy) or the stored value (stochastic). Other policies
// are returned unchanged.
std::shared_ptr<const BehaviorPolicy> with_mode(const std::shared_ptr<const BehaviorPolicy>& policy,
                                                EvalMode mode, double epsilon = 0.05);
MixedStrategy with_mode(const MixedStrategy& strategy, EvalMode mode, double epsilon = 0.05);

// Exact behavior strategy of a mixed strategy on Kuhn (Kuhn's theorem).
PolicyTable flatten_kuhn(const MixedStrategy& strategy, Player seat);

// Exact NashConv of the profile. Throws ConfigError for non-Kuhn games.
double nashconv_of(const Environment& game, const MixedStrategy& max_player,
                   const MixedStrategy& min_player, EvalMode mode = EvalMode::kGreedy,
                   double epsilon = 0.05);

// FPEM as a profile: W o pi_{1:t} for the max player, the uniform pool for
// the min player.
MixedStrategy fpem_max_strategy(const core::FpemState& state, int num_actions);
MixedStrategy fpem_min_strategy(const core::FpemState& state);

struct MatchResult {
  std::int64_t episodes = 0;
  std::int64_t wins = 0;  // for model a
  std::int64_t losses = 0;
  std::int64_t ties = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;  // model a's per-episode return
  double stderr_return = 0.0;
};

// In symmetric games a takes seat 1 in the first half of the episodes and
// seat 2 in the rest; otherwise a always plays seat 1. Components are drawn
// per episode.
MatchResult head_to_head(const Environment& game, const MixedStrategy& a, const MixedStrategy& b,
                         std::int64_t n_episodes, std::uint64_t seed);

struct AdversaryConfig {
  rl::SolverConfig solver;
  std::int64_t budget = 50000;
  // Stop once the 10K-episode moving average of the adversary's return
  // improves by less than tolerance for patience consecutive windows.
  bool plateau_stop = true;
  std::int64_t plateau_window = 10000;
  double plateau_tolerance = 0.01;
  int plateau_patience = 3;
  std::int64_t eval_episodes = 10000;

  void validate() const;
};

struct AdversaryResult {
  std::shared_ptr<const rl::QPolicy> adversary;  // greedy
  double avg_loss = 0.0;  // minus the frozen model's mean return vs the adversary
  double stderr_loss = 0.0;
  std::int64_t episodes_trained = 0;
  bool plateaued = false;
};

// Trains a DQN adversary against the frozen model in frozen_seat, then
// evaluates the greedy adversary. The frozen model is never modified.
AdversaryResult retrain_adversary(const Environment& game, const MixedStrategy& frozen,
                                  Player frozen_seat, const AdversaryConfig& config,
                                  std::uint64_t seed);

struct MetricsRecord {
  std::string run_id;
  std::string algo;
  std::string game;
  int iteration = 0;
  std::int64_t episodes = 0;
  std::optional<double> nashconv;
  std::optional<double> avg_loss;
  std::optional<double> win_rate;
  std::optional<double> stderr_value;  // "stderr" column
  std::uint64_t seed = 0;

  // Throws ContractError on negative NashConv or a win rate outside [0, 1].
  void validate() const;
  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "run_id,algo,game,iteration,episodes,nashconv,avg_loss,win_rate,stderr,seed";

std::string format_record(const MetricsRecord& r);
MetricsRecord parse_record(const std::string& line);
// Writes the header when the file is new or empty, then appends rows.
// Throws FormatError if an existing file has a different header.
void export_metrics(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> read_metrics(const std::string& path);

}  // namespace fpem::eval

#endif  // FPEM_EVAL_H_
