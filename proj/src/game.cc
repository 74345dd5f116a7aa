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

#include "fpem/game.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fpem/errors.h"

namespace fpem {

void GameSpec::validate() const {
  for (int p = 0; p < kNumPlayers; ++p) {
    if (num_actions[p] < 2) throw ConfigError("num_actions", "need at least 2 actions per player");
  }
  if (max_episode_length < 1) throw ConfigError("max_episode_length", "must be >= 1");
  if (observation_dim < 1) throw ConfigError("observation_dim", "must be >= 1");
  if (!zero_sum) throw ConfigError("zero_sum", "only zero-sum games are supported");
}

bool InfoState::is_legal(Action a) const {
  return std::find(legal_actions.begin(), legal_actions.end(), a) != legal_actions.end();
}

Decision BehaviorPolicy::decide(const InfoState& info, RngStream& rng) const {
  Decision d;
  d.distribution = action_distribution(info);
  bool usable = !d.distribution.empty();
  for (double p : d.distribution) usable = usable && std::isfinite(p) && p >= 0.0;
  // Invalid distributions are reported by validate_decision, not here.
  if (usable) {
    double total = 0.0;
    for (double p : d.distribution) total += p;
    if (total > 0.0) d.action = static_cast<Action>(rng.sample_discrete(d.distribution));
  }
  return d;
}

std::vector<double> UniformRandomPolicy::action_distribution(const InfoState& info) const {
  std::vector<double> dist(num_actions_, 0.0);
  const double p = 1.0 / static_cast<double>(info.legal_actions.size());
  for (Action a : info.legal_actions) dist[a] = p;
  return dist;
}

std::vector<double> FixedActionPolicy::action_distribution(const InfoState& info) const {
  std::vector<double> dist(num_actions_, 0.0);
  dist[info.is_legal(action_) ? action_ : info.legal_actions.front()] = 1.0;
  return dist;
}

std::vector<double> TabularPolicy::action_distribution(const InfoState& info) const {
  auto it = table_.find(info.key);
  if (it == table_.end()) throw CoverageError(info.key);
  return it->second;
}

Outcome decide_winner(const RewardPair& r) {
  if (r[0] > r[1]) return Outcome::kPlayer1;
  if (r[1] > r[0]) return Outcome::kPlayer2;
  return Outcome::kTie;
}

std::string distribution_defect(const InfoState& info, std::span<const double> dist,
                                int num_actions) {
  if (static_cast<int>(dist.size()) != num_actions) {
    std::ostringstream s;
    s << "distribution has length " << dist.size() << ", expected " << num_actions;
    return s.str();
  }
  double total = 0.0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    const double p = dist[a];
    if (!std::isfinite(p)) return "non-finite probability at action " + std::to_string(a);
    if (p < 0.0) return "negative probability at action " + std::to_string(a);
    if (p > 0.0 && !info.is_legal(static_cast<Action>(a)))
      return "mass on illegal action " + std::to_string(a);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream s;
    s.precision(17);
    s << "probabilities sum to " << total;
    return s.str();
  }
  return {};
}

void validate_decision(const InfoState& info, const Decision& decision, int num_actions,
                       Player player) {
  const std::string defect = decision.distribution.empty()
                                  ? std::string()
                                  : distribution_defect(info, decision.distribution, num_actions);
  if (!defect.empty()) throw PolicyFault(player, defect + " at '" + info.key + "'");
  if (!info.is_legal(decision.action))
    throw PolicyFault(player, "illegal action " + std::to_string(decision.action) + " at '" +
                                  info.key + "'");
}

Trajectory play_episode(Environment& env, const BehaviorPolicy& policy_1,
                        const BehaviorPolicy& policy_2, RngStream& rng) {
  const GameSpec& spec = env.spec();
  const BehaviorPolicy* policies[2] = {&policy_1, &policy_2};
  env.reset(rng);
  Trajectory traj;
  std::vector<Action> joint;
  while (!env.is_terminal()) {
    if (static_cast<int>(traj.steps.size()) >= spec.max_episode_length)
      throw ContractError(spec.name + ": episode exceeded max_episode_length");
    Step step;
    joint.clear();
    for (Player p : env.acting_players()) {
      Move move;
      move.info = env.info_state(p);
      const Decision d = policies[p]->decide(move.info, rng);
      validate_decision(move.info, d, spec.num_actions[p], p);
      move.action = d.action;
      move.component = d.component;
      joint.push_back(d.action);
      step.moves.push_back(std::move(move));
    }
    step.rewards = env.apply(joint);
    traj.episode_return[0] += step.rewards[0];
    traj.episode_return[1] += step.rewards[1];
    traj.steps.push_back(std::move(step));
  }
  traj.winner = decide_winner(traj.episode_return);
  return traj;
}

std::vector<Transition> player_transitions(const Trajectory& trajectory, Player player) {
  std::vector<Transition> out;
  Transition* pending = nullptr;
  for (const Step& step : trajectory.steps) {
    for (const Move& move : step.moves) {
      if (move.info.player != player) continue;
      if (pending != nullptr) {
        pending->next_features = move.info.features;
        pending->next_legal_actions = move.info.legal_actions;
      }
      Transition t;
      t.features = move.info.features;
      t.legal_actions = move.info.legal_actions;
      t.action = move.action;
      out.push_back(std::move(t));
      pending = &out.back();
    }
    if (pending != nullptr) pending->reward += step.rewards[player];
  }
  if (pending != nullptr) pending->terminal = true;
  return out;
}

MixedStrategy MixedStrategy::pure(std::shared_ptr<const BehaviorPolicy> policy) {
  return MixedStrategy{{std::move(policy)}, {}};
}

MixedStrategy MixedStrategy::uniform(std::vector<std::shared_ptr<const BehaviorPolicy>> policies) {
  return MixedStrategy{std::move(policies), {}};
}

std::vector<double> MixedStrategy::probabilities() const {
  if (components.empty()) throw ContractError("mixed strategy has no components");
  if (weights.empty()) return std::vector<double>(components.size(), 1.0 / components.size());
  if (weights.size() != components.size()) throw ContractError("mixed strategy weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("mixed strategy weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ContractError("mixed strategy weights sum to zero");
  std::vector<double> p(weights);
  for (double& x : p) x /= total;
  return p;
}

std::size_t MixedStrategy::sample_index(RngStream& rng) const {
  if (components.empty()) throw ContractError("mixed strategy has no components");
  if (components.size() == 1) return 0;
  if (weights.empty()) return rng.uniform_int(components.size());
  return rng.sample_discrete(probabilities());
}

}  // namespace fpem
