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

#ifndef FPEM_GAME_H_
#define FPEM_GAME_H_

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fpem/rng.h"

namespace fpem {

// Seat index. Seat 0 is player 1 (the max player), seat 1 is player 2.
using Player = int;
using Action = int;

inline constexpr Player kMaxPlayer = 0;
inline constexpr Player kMinPlayer = 1;
inline constexpr int kNumPlayers = 2;

inline Player opponent_of(Player p) { return 1 - p; }

using RewardPair = std::array<double, 2>;

struct GameSpec {
  std::string name;
  std::array<int, 2> num_actions{2, 2};
  int max_episode_length = 1;
  int observation_dim = 1;
  bool zero_sum = true;
  // Seats are interchangeable: same action space, egocentric observations.
  bool symmetric = false;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

// What the acting player sees at a decision point.
struct InfoState {
  std::string key;              // canonical encoding of the observation-action history
  std::vector<double> features; // length GameSpec::observation_dim
  std::vector<Action> legal_actions;
  Player player = kMaxPlayer;

  bool is_legal(Action a) const;
};

// One sampled decision. distribution is the distribution the action was drawn
// from (for composite policies, the selected sub-policy's distribution) and is
// validated by play_episode; policies that sample directly may leave it empty,
// in which case only legality is checked. component is the index of the executed
// sub-policy for composite policies, -1 otherwise.
struct Decision {
  Action action = 0;
  int component = -1;
  std::vector<double> distribution;
};

// Maps an information state to a distribution over the player's actions.
// Implementations are immutable during play so that a single instance can be
// shared by concurrent rollout workers.
class BehaviorPolicy {
 public:
  virtual ~BehaviorPolicy() = default;

  // Full-length vector over GameSpec::num_actions; zero on illegal actions.
  virtual std::vector<double> action_distribution(const InfoState& info) const = 0;

  virtual Decision decide(const InfoState& info, RngStream& rng) const;

  virtual std::string describe() const { return "policy"; }
};

using PolicyPtr = std::shared_ptr<const BehaviorPolicy>;

class UniformRandomPolicy final : public BehaviorPolicy {
 public:
  explicit UniformRandomPolicy(int num_actions) : num_actions_(num_actions) {}
  std::vector<double> action_distribution(const InfoState& info) const override;
  std::string describe() const override { return "uniform"; }

 private:
  int num_actions_;
};

// Plays a fixed action whenever it is legal, otherwise the first legal action.
class FixedActionPolicy final : public BehaviorPolicy {
 public:
  FixedActionPolicy(int num_actions, Action action)
      : num_actions_(num_actions), action_(action) {}
  std::vector<double> action_distribution(const InfoState& info) const override;
  std::string describe() const override { return "fixed:" + std::to_string(action_); }

 private:
  int num_actions_;
  Action action_;
};

// Information-state key -> full action distribution.
using PolicyTable = std::map<std::string, std::vector<double>>;

class TabularPolicy final : public BehaviorPolicy {
 public:
  explicit TabularPolicy(PolicyTable table) : table_(std::move(table)) {}
  // Throws CoverageError for keys missing from the table.
  std::vector<double> action_distribution(const InfoState& info) const override;
  const PolicyTable& table() const { return table_; }
  std::string describe() const override { return "tabular"; }

 private:
  PolicyTable table_;
};

// A two-player zero-sum game engine. Sequential games report one acting
// player per decision point; simultaneous-move games report both.
// Engines are single-owner mutable state; use clone() for parallel replicas.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const GameSpec& spec() const = 0;
  // Starts a new episode, consuming chance outcomes from rng.
  virtual void reset(RngStream& rng) = 0;
  virtual bool is_terminal() const = 0;
  // Seats to act now, ascending. Empty iff terminal.
  virtual std::vector<Player> acting_players() const = 0;
  virtual InfoState info_state(Player player) const = 0;
  // One action per acting player, in acting_players() order.
  virtual RewardPair apply(std::span<const Action> actions) = 0;
  // Number of decision steps taken this episode.
  virtual int ticks() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct Move {
  InfoState info;
  Action action = 0;
  int component = -1;
};

struct Step {
  std::vector<Move> moves;
  RewardPair rewards{0.0, 0.0};
};

enum class Outcome { kPlayer1, kPlayer2, kTie };

struct Trajectory {
  std::vector<Step> steps;
  RewardPair episode_return{0.0, 0.0};
  Outcome winner = Outcome::kTie;
};

// Higher return wins; a tie needs equal returns (both 0 in zero-sum play).
Outcome decide_winner(const RewardPair& episode_return);

// Checks a decision against the game contract; throws PolicyFault naming player.
void validate_decision(const InfoState& info, const Decision& decision,
                       int num_actions, Player player);

// Normalizes the validity check for a bare distribution; returns an empty
// string when valid, otherwise a description of the defect.
std::string distribution_defect(const InfoState& info, std::span<const double> dist,
                                int num_actions);

// Plays one episode from env.reset(rng) to termination.
Trajectory play_episode(Environment& env, const BehaviorPolicy& policy_1,
                        const BehaviorPolicy& policy_2, RngStream& rng);

// One learner-centric transition: from an own decision point to the next own
// decision point (or terminal), with the rewards accumulated in between.
struct Transition {
  std::vector<double> features;
  std::vector<Action> legal_actions;
  Action action = 0;
  double reward = 0.0;
  std::vector<double> next_features;
  std::vector<Action> next_legal_actions;
  bool terminal = false;
};

std::vector<Transition> player_transitions(const Trajectory& trajectory, Player player);

// Mixed strategy over behavior policies: one component is drawn per episode.
// Empty weights mean uniform.
struct MixedStrategy {
  std::vector<std::shared_ptr<const BehaviorPolicy>> components;
  std::vector<double> weights;

  static MixedStrategy pure(std::shared_ptr<const BehaviorPolicy> policy);
  static MixedStrategy uniform(std::vector<std::shared_ptr<const BehaviorPolicy>> policies);
  std::size_t sample_index(RngStream& rng) const;
  const BehaviorPolicy& sample(RngStream& rng) const { return *components[sample_index(rng)]; }
  // Normalized weights, uniform when none are set.
  std::vector<double> probabilities() const;
};

}  // namespace fpem

#endif  // FPEM_GAME_H_
