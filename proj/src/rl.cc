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

#include "fpem/rl.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fpem/errors.h"
#include "fpem/rollout.h"

namespace fpem::rl {

double EpsilonSchedule::at(std::int64_t episode, std::int64_t budget) const {
  const double horizon = fraction * static_cast<double>(budget);
  if (horizon <= 0.0 || static_cast<double>(episode) >= horizon) return end;
  const double progress = static_cast<double>(std::max<std::int64_t>(episode, 0)) / horizon;
  return start + (end - start) * progress;
}

void SolverConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0, 1]");
  if (replay_capacity < 1) throw ConfigError("replay_capacity", "must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (target_sync_interval < 1) throw ConfigError("target_sync_interval", "must be positive");
  for (double e : {epsilon.start, epsilon.end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon", "endpoints must lie in [0, 1]");
  }
  if (epsilon.end > epsilon.start) throw ConfigError("epsilon", "schedule must not increase");
  if (!(epsilon.fraction >= 0.0 && epsilon.fraction <= 1.0))
    throw ConfigError("epsilon_fraction", "must lie in [0, 1]");
  if (learning_frequency < 1) throw ConfigError("learning_frequency", "must be positive");
  if (updates_per_burst < 0) throw ConfigError("updates_per_burst", "must be nonnegative");
  if (max_episodes < 0) throw ConfigError("max_episodes", "must be nonnegative");
  if (window < 1) throw ConfigError("window", "must be positive");
  if (use_stop_criterion && window > max_episodes)
    throw ConfigError("window", "must not exceed max_episodes");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden", "layer widths must be positive");
  }
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
}

ReplayBuffer::ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ContractError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  StoredTransition s;
  s.features.assign(t.features.begin(), t.features.end());
  s.next_features.assign(t.next_features.begin(), t.next_features.end());
  for (Action a : t.next_legal_actions) {
    if (a < 0 || a >= 32) throw ContractError("replay buffer: action index beyond mask width");
    s.next_legal_mask |= 1u << a;
  }
  s.action = t.action;
  s.reward = static_cast<float>(t.reward);
  s.terminal = t.terminal;
  if (size() < capacity_) {
    items_.push_back(std::move(s));
  } else {
    items_[next_] = std::move(s);
  }
  next_ = (next_ + 1) % capacity_;
  ++pushed_;
}

std::vector<std::int64_t> ReplayBuffer::sample(int batch, RngStream& rng) const {
  if (items_.empty()) throw ContractError("replay buffer: sample from empty buffer");
  std::vector<std::int64_t> idx(batch);
  for (int i = 0; i < batch; ++i) idx[i] = static_cast<std::int64_t>(rng.uniform_int(items_.size()));
  return idx;
}

QPolicy::QPolicy(std::shared_ptr<const nn::Mlp> net, int num_actions, double epsilon)
    : net_(std::move(net)), num_actions_(num_actions), epsilon_(epsilon) {
  if (!net_) throw ContractError("QPolicy: null network");
  if (net_->output_dim() != num_actions) throw ContractError("QPolicy: head width != num_actions");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("QPolicy: epsilon outside [0, 1]");
}

Action QPolicy::greedy_action(const InfoState& info) const {
  if (info.legal_actions.empty()) throw ContractError("QPolicy: no legal actions");
  const Eigen::VectorXd q = net_->forward(info.features);
  Action best = info.legal_actions.front();
  for (Action a : info.legal_actions) {
    if (q(a) > q(best) || (q(a) == q(best) && a < best)) best = a;
  }
  return best;
}

std::vector<double> QPolicy::action_distribution(const InfoState& info) const {
  std::vector<double> d(num_actions_, 0.0);
  const double share = epsilon_ / static_cast<double>(info.legal_actions.size());
  if (epsilon_ > 0.0) {
    for (Action a : info.legal_actions) d[a] = share;
  }
  if (epsilon_ < 1.0) d[greedy_action(info)] += 1.0 - epsilon_;
  return d;
}

Decision QPolicy::decide(const InfoState& info, RngStream& rng) const {
  // Skips the forward pass on exploration steps.
  Decision out;
  if (epsilon_ > 0.0 && rng.bernoulli(epsilon_)) {
    out.action = info.legal_actions[rng.uniform_int(info.legal_actions.size())];
  } else {
    out.action = greedy_action(info);
  }
  return out;
}

double td_target(double reward, std::span<const double> next_q, bool terminal, double gamma) {
  if (terminal || gamma == 0.0) return reward;
  if (next_q.empty()) throw ContractError("td_target: no next action values");
  return reward + gamma * *std::max_element(next_q.begin(), next_q.end());
}

bool stop_criterion(const WindowStats& stats, double delta) {
  if (stats.episodes <= 0) return false;
  return static_cast<double>(stats.wins - stats.losses) / static_cast<double>(stats.episodes) > delta;
}

WindowCounter::WindowCounter(std::int64_t window) : window_(window) {
  if (window < 1) throw ContractError("window must be positive");
}

void WindowCounter::add(int outcome) {
  recent_.push_back(outcome);
  ++stats_.episodes;
  if (outcome > 0) ++stats_.wins;
  if (outcome < 0) ++stats_.losses;
  if (static_cast<std::int64_t>(recent_.size()) > window_) {
    const int old = recent_.front();
    recent_.pop_front();
    --stats_.episodes;
    if (old > 0) --stats_.wins;
    if (old < 0) --stats_.losses;
  }
}

int seat_outcome(const Trajectory& t, Player seat) {
  if (t.winner == Outcome::kTie) return 0;
  const bool p1_won = t.winner == Outcome::kPlayer1;
  return (p1_won == (seat == kMaxPlayer)) ? 1 : -1;
}

DqnLearner::DqnLearner(int input_dim, int num_actions, const SolverConfig& config,
                       RngStream& init_rng)
    : config_(config),
      num_actions_(num_actions),
      optimizer_(config.optimizer),
      buffer_(config.replay_capacity) {
  config_.validate();
  std::vector<int> sizes = {input_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(num_actions);
  online_ = nn::Mlp(sizes, init_rng);
  target_ = online_;
}

DqnLearner::DqnLearner(nn::Mlp initial, const SolverConfig& config)
    : config_(config),
      num_actions_(initial.output_dim()),
      online_(std::move(initial)),
      optimizer_(config.optimizer),
      buffer_(config.replay_capacity) {
  config_.validate();
  target_ = online_;
}

void DqnLearner::observe_all(const std::vector<Transition>& ts) {
  for (const Transition& t : ts) buffer_.push(t);
}

std::shared_ptr<const nn::Mlp> DqnLearner::snapshot() const {
  return std::make_shared<const nn::Mlp>(online_);
}

double DqnLearner::update_once(RngStream& rng) {
  const int b = config_.batch_size;
  const std::vector<std::int64_t> idx = buffer_.sample(b, rng);
  const int dim = online_.input_dim();
  Eigen::MatrixXd x(dim, b), next_x(dim, b);
  for (int i = 0; i < b; ++i) {
    const StoredTransition& s = buffer_.at(idx[i]);
    for (int r = 0; r < dim; ++r) {
      x(r, i) = s.features[r];
      next_x(r, i) = s.terminal ? 0.0 : s.next_features[r];
    }
  }
  const Eigen::MatrixXd next_q = target_.forward_batch(next_x);
  nn::SelectedSquaredErrorTarget target;
  target.actions.resize(b);
  target.targets.resize(b);
  std::vector<double> legal_q;
  for (int i = 0; i < b; ++i) {
    const StoredTransition& s = buffer_.at(idx[i]);
    legal_q.clear();
    if (!s.terminal) {
      for (int a = 0; a < num_actions_; ++a) {
        if (s.next_legal_mask & (1u << a)) legal_q.push_back(next_q(a, i));
      }
    }
    target.actions[i] = s.action;
    target.targets[i] = td_target(s.reward, legal_q, s.terminal || legal_q.empty(), config_.gamma);
  }
  const nn::LossAndGradient lg = nn::backward(online_, x, target);
  nn::apply_update(online_, lg.gradients, optimizer_);
  ++updates_;
  if (updates_ % config_.target_sync_interval == 0) target_ = online_;
  return lg.loss;
}

double DqnLearner::learn(RngStream& rng) {
  if (buffer_.size() < config_.batch_size || config_.updates_per_burst == 0)
    return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (int u = 0; u < config_.updates_per_burst; ++u) total += update_once(rng);
  return total / config_.updates_per_burst;
}

TrainingLog dqn_train(DqnLearner& learner, const Environment& game, Player responder,
                      const OpponentSampler& opponents, const SolverConfig& config,
                      const RngStream& rng, const TrainHooks& hooks) {
  config.validate();
  const RngStream collect_rng = rng.child(0);
  RngStream learn_rng = rng.child(1);
  const int num_actions = game.spec().num_actions[responder];
  WindowCounter window(config.window);
  TrainingLog log;
  std::int64_t episode = 0;
  while (episode < config.max_episodes) {
    const std::int64_t count =
        std::min<std::int64_t>(config.learning_frequency, config.max_episodes - episode);
    const std::shared_ptr<const nn::Mlp> net = learner.snapshot();
    const std::int64_t first = episode;
    auto job = [&](std::int64_t k, Environment& env, RngStream& r) {
      const std::shared_ptr<const BehaviorPolicy> opponent = opponents(r);
      const QPolicy explorer(net, num_actions, config.epsilon.at(k, config.max_episodes));
      if (responder == kMaxPlayer) return play_episode(env, explorer, *opponent, r);
      return play_episode(env, *opponent, explorer, r);
    };
    const std::vector<Trajectory> batch = collect_episodes(game, first, count, collect_rng, job);
    for (std::int64_t i = 0; i < count; ++i) {
      const Trajectory& t = batch[i];
      learner.observe_all(player_transitions(t, responder));
      window.add(seat_outcome(t, responder));
      if (hooks.on_episode) hooks.on_episode(first + i, t);
    }
    episode += count;
    TrainingLogRow row;
    row.episode = episode;
    row.window = window.stats();
    row.window_win_rate = static_cast<double>(row.window.wins) / static_cast<double>(row.window.episodes);
    row.loss = learner.learn(learn_rng);
    row.epsilon = config.epsilon.at(episode - 1, config.max_episodes);
    log.rows.push_back(row);
    if (hooks.on_burst) hooks.on_burst(row);
    if (config.use_stop_criterion && window.full() &&
        stop_criterion(window.stats(), config.stop_delta)) {
      log.stopped_early = true;
      break;
    }
    if (hooks.should_stop && hooks.should_stop()) {
      log.stopped_early = true;
      break;
    }
  }
  log.episodes = episode;
  log.updates = learner.updates();
  return log;
}

BestResponseResult dqn_train_best_response(const Environment& game, Player responder,
                                           const OpponentSampler& opponents,
                                           const SolverConfig& config, const RngStream& rng,
                                           const TrainHooks& hooks) {
  RngStream init_rng = rng.child(2);
  const GameSpec& spec = game.spec();
  DqnLearner learner(spec.observation_dim, spec.num_actions[responder], config, init_rng);
  BestResponseResult result;
  result.log = dqn_train(learner, game, responder, opponents, config, rng, hooks);
  result.policy = std::make_shared<const QPolicy>(learner.snapshot(), spec.num_actions[responder], 0.0);
  return result;
}

}  // namespace fpem::rl
