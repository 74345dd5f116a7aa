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

#ifndef FPEM_BASELINES_H_
#define FPEM_BASELINES_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fpem/fpem.h"
#include "fpem/game.h"
#include "fpem/nn.h"
#include "fpem/rl.h"

// Comparison algorithms: NFSP, single-model alternation (SMv1), single model
// vs opponent pool (SMv2), pool vs pool (OPPO) and a regret-matching PSRO.
namespace fpem::baselines {

// Snapshot handed to progress callbacks: both players as mixed strategies.
struct Progress {
  int iteration = 0;          // 1-based; NFSP reports evaluation points
  std::int64_t episodes = 0;  // cumulative training episodes
  MixedStrategy max_player;
  MixedStrategy min_player;
};
using ProgressCallback = std::function<void(const Progress&)>;

// sigma(a) = max(R(a), 0) / sum_b max(R(b), 0); uniform if no positive entry.
std::vector<double> regret_matching(std::span<const double> cumulative_regret);

// Softmax over legal actions of a supervised average-policy network.
class SoftmaxPolicy : public BehaviorPolicy {
 public:
  SoftmaxPolicy(std::shared_ptr<const nn::Mlp> net, int num_actions);
  std::vector<double> action_distribution(const InfoState& info) const override;
  std::string describe() const override { return "average"; }
  const nn::Mlp& net() const { return *net_; }

 private:
  std::shared_ptr<const nn::Mlp> net_;
  int num_actions_;
};

struct NfspConfig {
  double eta = 0.1;  // anticipatory parameter: probability of best-response play
  rl::SolverConfig solver;
  std::int64_t total_episodes = 500000;
  std::int64_t reservoir_capacity = 200000;
  std::vector<int> average_hidden = {64};
  nn::OptimizerConfig average_optimizer;
  int average_batch_size = 128;
  int average_updates_per_burst = 2;
  std::int64_t eval_interval = 50000;  // episodes between progress reports

  NfspConfig();
  void validate() const;
};

struct NfspResult {
  std::shared_ptr<const SoftmaxPolicy> average[2];
  std::shared_ptr<const rl::QPolicy> best_response[2];
  std::int64_t episodes = 0;
  std::int64_t sl_examples[2] = {0, 0};  // supervised pairs seen per seat
};

// Both seats learn simultaneously. Each episode a seat plays its epsilon-greedy
// best response with probability eta, else its average policy. All own
// transitions feed the seat's DQN; best-response (state, action) pairs feed
// the reservoir that trains the average policy.
NfspResult nfsp_run(const Environment& game, const NfspConfig& config, std::uint64_t seed,
                    const ProgressCallback& on_progress = {});

struct IteratedConfig {
  int iterations = 10;
  rl::SolverConfig max_solver;
  rl::SolverConfig min_solver;
  int pool_capacity = 10;  // SMv2 min pool; oldest entries drop out

  void validate() const;
};

struct IteratedResult {
  std::vector<std::shared_ptr<const rl::QPolicy>> max_policies;  // SMv1/SMv2: latest last
  std::vector<std::shared_ptr<const rl::QPolicy>> min_policies;
  MixedStrategy max_player;
  MixedStrategy min_player;
  std::int64_t episodes = 0;
};

// SMv1: each player keeps a single network, warm-started every iteration and
// retrained (fresh optimizer and buffer) against the other's latest policy.
IteratedResult smv1_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress = {});
// SMv2: single max model against a uniform pool of min best responses.
IteratedResult smv2_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress = {});
// OPPO: both sides grow uniform pools of fresh best responses.
IteratedResult oppo_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress = {});

// Row-player payoff estimates; entry (i, j) is the max player's mean return
// with row policy i in seat 1 and column policy j in seat 2.
struct EmpiricalMetaGame {
  Eigen::MatrixXd payoff;
  Eigen::MatrixXd stderr_payoff;
  std::int64_t sims_per_entry = 0;  // 0 for exact entries
};

EmpiricalMetaGame estimate_meta_game(const Environment& game,
                                     std::span<const std::shared_ptr<const BehaviorPolicy>> rows,
                                     std::span<const std::shared_ptr<const BehaviorPolicy>> cols,
                                     std::int64_t sims_per_entry, std::uint64_t seed);
// Kuhn only: entries from the exact evaluator.
EmpiricalMetaGame exact_kuhn_meta_game(std::span<const std::shared_ptr<const BehaviorPolicy>> rows,
                                       std::span<const std::shared_ptr<const BehaviorPolicy>> cols);

struct MetaStrategy {
  std::vector<double> row;
  std::vector<double> col;
};
// Regret-matching self-play on the zero-sum matrix; returns averaged strategies.
MetaStrategy solve_meta_game(const Eigen::MatrixXd& payoff, int iterations);

struct PsroConfig {
  int iterations = 10;
  rl::SolverConfig solver;
  bool exact_entries = false;
  std::int64_t sims_per_entry = 10000;
  int rm_iterations = 10000;

  void validate() const;
};

struct PsroResult {
  std::vector<std::shared_ptr<const BehaviorPolicy>> pools[2];
  EmpiricalMetaGame meta_game;
  MetaStrategy meta_strategy;
  std::int64_t episodes = 0;
};

// PSRO with regret matching as the meta-solver; pools start with the
// uniform-random policy. Kuhn only.
PsroResult psro_lite_run(const Environment& game, const PsroConfig& config, std::uint64_t seed,
                         const ProgressCallback& on_progress = {});

}  // namespace fpem::baselines

#endif  // FPEM_BASELINES_H_
