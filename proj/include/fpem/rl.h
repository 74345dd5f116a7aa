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

#ifndef FPEM_RL_H_
#define FPEM_RL_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fpem/game.h"
#include "fpem/nn.h"
#include "fpem/rng.h"

// DQN best-response solver: replay buffer, target network, epsilon-greedy
// exploration and a windowed win/loss stop rule.
namespace fpem::rl {

// Linear decay from start to end over the first fraction of the budget,
// constant afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double fraction = 0.2;

  double at(std::int64_t episode, std::int64_t budget) const;
};

struct SolverConfig {
  double gamma = 1.0;
  std::int64_t replay_capacity = 200000;
  int batch_size = 128;
  std::int64_t target_sync_interval = 1000;  // in gradient updates
  EpsilonSchedule epsilon;
  int learning_frequency = 16;  // episodes between update bursts
  int updates_per_burst = 4;
  std::int64_t max_episodes = 50000;
  bool use_stop_criterion = false;
  double stop_delta = 0.2;
  std::int64_t window = 6000;
  std::vector<int> hidden = {64};
  nn::OptimizerConfig optimizer;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Transitions as stored in the replay buffer. Features are kept in single
// precision to halve the memory footprint; learning runs in doubles.
struct StoredTransition {
  std::vector<float> features;
  std::vector<float> next_features;
  std::uint32_t next_legal_mask = 0;  // bit a set when action a is legal
  int action = 0;
  float reward = 0.0f;
  bool terminal = false;
};

// Fixed-capacity FIFO ring.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity);

  void push(const Transition& t);
  std::int64_t size() const { return static_cast<std::int64_t>(items_.size()); }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t pushed() const { return pushed_; }
  const StoredTransition& at(std::int64_t i) const { return items_[i]; }
  // Indices drawn uniformly with replacement.
  std::vector<std::int64_t> sample(int batch, RngStream& rng) const;

 private:
  std::int64_t capacity_;
  std::int64_t next_ = 0;
  std::int64_t pushed_ = 0;
  std::vector<StoredTransition> items_;
};

// Greedy (ties to the lowest index) or epsilon-greedy over legal actions.
class QPolicy : public BehaviorPolicy {
 public:
  QPolicy(std::shared_ptr<const nn::Mlp> net, int num_actions, double epsilon = 0.0);

  std::vector<double> action_distribution(const InfoState& info) const override;
  Decision decide(const InfoState& info, RngStream& rng) const override;

  Action greedy_action(const InfoState& info) const;
  const nn::Mlp& net() const { return *net_; }
  std::shared_ptr<const nn::Mlp> shared_net() const { return net_; }
  double epsilon() const { return epsilon_; }
  int num_actions() const { return num_actions_; }

 private:
  std::shared_ptr<const nn::Mlp> net_;
  int num_actions_;
  double epsilon_;
};

// terminal ? reward : reward + gamma * max(next_q).
double td_target(double reward, std::span<const double> next_q, bool terminal, double gamma);

struct WindowStats {
  std::int64_t wins = 0;
  std::int64_t losses = 0;
  std::int64_t episodes = 0;
};

// (wins - losses) / episodes > delta; strict, so exactly delta continues.
bool stop_criterion(const WindowStats& stats, double delta);

// Outcomes of the most recent episodes from the learner's seat.
class WindowCounter {
 public:
  explicit WindowCounter(std::int64_t window);

  void add(int outcome);  // +1 win, -1 loss, 0 tie
  WindowStats stats() const { return stats_; }
  bool full() const { return static_cast<std::int64_t>(recent_.size()) == window_; }

 private:
  std::int64_t window_;
  std::deque<int> recent_;
  WindowStats stats_;
};

// +1 when seat wins, -1 when it loses, 0 on a tie.
int seat_outcome(const Trajectory& t, Player seat);

// Online network, target network, optimizer and replay buffer of a single
// learner. Learning is serial; snapshots may be shared with rollout workers.
class DqnLearner {
 public:
  DqnLearner(int input_dim, int num_actions, const SolverConfig& config, RngStream& init_rng);
  // Warm start from existing weights with fresh optimizer and buffer.
  DqnLearner(nn::Mlp initial, const SolverConfig& config);

  void observe(const Transition& t) { buffer_.push(t); }
  void observe_all(const std::vector<Transition>& ts);
  // One burst of updates; returns the mean loss, or NaN when the buffer
  // holds fewer than batch_size transitions. Throws DivergenceError.
  double learn(RngStream& rng);

  std::shared_ptr<const nn::Mlp> snapshot() const;
  const nn::Mlp& online() const { return online_; }
  const nn::Mlp& target() const { return target_; }
  std::int64_t updates() const { return updates_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  int num_actions() const { return num_actions_; }
  const SolverConfig& config() const { return config_; }

 private:
  double update_once(RngStream& rng);

  SolverConfig config_;
  int num_actions_;
  nn::Mlp online_;
  nn::Mlp target_;
  nn::OptimizerState optimizer_;
  ReplayBuffer buffer_;
  std::int64_t updates_ = 0;
};

struct TrainingLogRow {
  std::int64_t episode = 0;
  double window_win_rate = 0.0;  // wins / episodes over the current window
  WindowStats window;
  double loss = 0.0;             // mean loss of the last burst (NaN if none)
  double epsilon = 0.0;
};

struct TrainingLog {
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  bool stopped_early = false;
  std::vector<TrainingLogRow> rows;  // one per burst
};

// Opponent for one episode; called with that episode's RNG stream.
using OpponentSampler = std::function<std::shared_ptr<const BehaviorPolicy>(RngStream&)>;

struct TrainHooks {
  // Called serially, in episode order, after each episode is collected.
  std::function<void(std::int64_t episode, const Trajectory&)> on_episode;
  // Called after each learning burst.
  std::function<void(const TrainingLogRow&)> on_burst;
  // Checked after each burst; returning true ends training.
  std::function<bool()> should_stop;
};

struct BestResponseResult {
  std::shared_ptr<const QPolicy> policy;  // greedy
  TrainingLog log;
};

// Trains a fresh learner in seat responder against per-episode opponents.
// Episodes are collected in chunks of learning_frequency (in parallel, with
// per-episode RNG streams) and then learned from serially.
BestResponseResult dqn_train_best_response(const Environment& game, Player responder,
                                           const OpponentSampler& opponents,
                                           const SolverConfig& config, const RngStream& rng,
                                           const TrainHooks& hooks = {});
// Same loop continuing an existing learner.
TrainingLog dqn_train(DqnLearner& learner, const Environment& game, Player responder,
                      const OpponentSampler& opponents, const SolverConfig& config,
                      const RngStream& rng, const TrainHooks& hooks = {});

}  // namespace fpem::rl

#endif  // FPEM_RL_H_
