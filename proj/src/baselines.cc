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

#include "fpem/baselines.h"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fpem/errors.h"
#include "fpem/kuhn.h"
#include "fpem/rollout.h"

namespace fpem::baselines {

std::vector<double> regret_matching(std::span<const double> cumulative_regret) {
  const std::size_t n = cumulative_regret.size();
  if (n == 0) throw ContractError("regret_matching: empty regret vector");
  std::vector<double> sigma(n, 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (!std::isfinite(cumulative_regret[a])) throw ContractError("regret_matching: non-finite regret");
    sigma[a] = std::max(cumulative_regret[a], 0.0);
    total += sigma[a];
  }
  if (total <= 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  for (double& s : sigma) s /= total;
  return sigma;
}

SoftmaxPolicy::SoftmaxPolicy(std::shared_ptr<const nn::Mlp> net, int num_actions)
    : net_(std::move(net)), num_actions_(num_actions) {
  if (!net_ || net_->output_dim() != num_actions) throw ContractError("SoftmaxPolicy: head width mismatch");
}

std::vector<double> SoftmaxPolicy::action_distribution(const InfoState& info) const {
  const Eigen::VectorXd z = net_->forward(info.features);
  double m = -std::numeric_limits<double>::infinity();
  for (Action a : info.legal_actions) m = std::max(m, z(a));
  std::vector<double> d(num_actions_, 0.0);
  double total = 0.0;
  for (Action a : info.legal_actions) {
    d[a] = std::exp(z(a) - m);
    total += d[a];
  }
  for (double& x : d) x /= total;
  return d;
}

NfspConfig::NfspConfig() {
  // Small constant-ish exploration for the best-response nets.
  solver.epsilon = {0.06, 0.001, 1.0};
  solver.max_episodes = total_episodes;
}

void NfspConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta", "must lie in [0, 1]");
  solver.validate();
  if (total_episodes < 0) throw ConfigError("total_episodes", "must be nonnegative");
  if (reservoir_capacity < 1) throw ConfigError("reservoir_capacity", "must be positive");
  if (average_batch_size < 1) throw ConfigError("average_batch_size", "must be positive");
  if (average_updates_per_burst < 0) throw ConfigError("average_updates_per_burst", "must be nonnegative");
  if (eval_interval < 1) throw ConfigError("eval_interval", "must be positive");
}

namespace {

struct SlExample {
  std::vector<float> features;
  int action = 0;
};

// Supervised average-policy learner for one seat.
class AverageLearner {
 public:
  AverageLearner(int input_dim, int num_actions, const NfspConfig& config, RngStream& init_rng)
      : config_(config),
        optimizer_(config.average_optimizer),
        memory_(static_cast<std::size_t>(config.reservoir_capacity)) {
    std::vector<int> sizes = {input_dim};
    sizes.insert(sizes.end(), config.average_hidden.begin(), config.average_hidden.end());
    sizes.push_back(num_actions);
    net_ = nn::Mlp(sizes, init_rng);
    // Zero head: the initial average policy is uniform.
    net_.layers().back().weight.setZero();
  }

  void add(const InfoState& info, Action a, RngStream& rng) {
    memory_.insert(SlExample{std::vector<float>(info.features.begin(), info.features.end()), a}, rng);
  }

  void learn(RngStream& rng) {
    if (memory_.size() < static_cast<std::size_t>(config_.average_batch_size)) return;
    const int b = config_.average_batch_size;
    const int dim = net_.input_dim();
    for (int u = 0; u < config_.average_updates_per_burst; ++u) {
      Eigen::MatrixXd x(dim, b);
      nn::CrossEntropyTarget y;
      for (int i = 0; i < b; ++i) {
        const SlExample& e = memory_.items()[rng.uniform_int(memory_.size())];
        for (int r = 0; r < dim; ++r) x(r, i) = e.features[r];
        y.labels.push_back(e.action);
      }
      nn::apply_update(net_, nn::backward(net_, x, y).gradients, optimizer_);
    }
  }

  std::shared_ptr<const SoftmaxPolicy> policy() const {
    return std::make_shared<const SoftmaxPolicy>(std::make_shared<const nn::Mlp>(net_), net_.output_dim());
  }
  std::uint64_t seen() const { return memory_.seen(); }

 private:
  NfspConfig config_;
  nn::OptimizerState optimizer_;
  core::Reservoir<SlExample> memory_;
  nn::Mlp net_;
};

}  // namespace

NfspResult nfsp_run(const Environment& game, const NfspConfig& config, std::uint64_t seed,
                    const ProgressCallback& on_progress) {
  config.validate();
  const GameSpec& spec = game.spec();
  rl::SolverConfig solver = config.solver;
  solver.max_episodes = config.total_episodes;  // epsilon schedule spans the run
  std::vector<rl::DqnLearner> br;
  std::vector<AverageLearner> avg;
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    RngStream init = RngStream::derive(seed, {0, static_cast<std::uint64_t>(seat)});
    br.emplace_back(spec.observation_dim, spec.num_actions[seat], solver, init);
    avg.emplace_back(spec.observation_dim, spec.num_actions[seat], config, init);
  }
  const RngStream collect_rng = RngStream::derive(seed, {1});
  RngStream learn_rng = RngStream::derive(seed, {2});
  RngStream memory_rng = RngStream::derive(seed, {3});
  std::int64_t episode = 0;
  std::int64_t next_report = config.eval_interval;
  int report_index = 0;
  std::vector<char> modes;  // per chunk episode: bit s set when seat s plays its BR
  while (episode < config.total_episodes) {
    const std::int64_t count =
        std::min({static_cast<std::int64_t>(solver.learning_frequency), config.total_episodes - episode,
                  next_report - episode});
    const double eps = solver.epsilon.at(episode, config.total_episodes);
    const rl::QPolicy br0(br[0].snapshot(), spec.num_actions[0], eps);
    const rl::QPolicy br1(br[1].snapshot(), spec.num_actions[1], eps);
    const auto avg0 = avg[0].policy();
    const auto avg1 = avg[1].policy();
    modes.assign(static_cast<std::size_t>(count), 0);
    const std::int64_t first = episode;
    auto job = [&](std::int64_t k, Environment& env, RngStream& r) {
      const bool m0 = r.bernoulli(config.eta);
      const bool m1 = r.bernoulli(config.eta);
      modes[k - first] = static_cast<char>((m0 ? 1 : 0) | (m1 ? 2 : 0));
      const BehaviorPolicy& p0 = m0 ? static_cast<const BehaviorPolicy&>(br0) : *avg0;
      const BehaviorPolicy& p1 = m1 ? static_cast<const BehaviorPolicy&>(br1) : *avg1;
      return play_episode(env, p0, p1, r);
    };
    const std::vector<Trajectory> batch = collect_episodes(game, first, count, collect_rng, job);
    for (std::int64_t i = 0; i < count; ++i) {
      const Trajectory& t = batch[i];
      for (Player seat : {kMaxPlayer, kMinPlayer}) {
        br[seat].observe_all(player_transitions(t, seat));
        if (!(modes[i] & (1 << seat))) continue;
        for (const Step& s : t.steps)
          for (const Move& m : s.moves)
            if (m.info.player == seat) avg[seat].add(m.info, m.action, memory_rng);
      }
    }
    episode += count;
    for (Player seat : {kMaxPlayer, kMinPlayer}) {
      br[seat].learn(learn_rng);
      avg[seat].learn(learn_rng);
    }
    if (on_progress && (episode >= next_report || episode == config.total_episodes)) {
      next_report += config.eval_interval;
      on_progress({++report_index, episode, MixedStrategy::pure(avg[0].policy()),
                   MixedStrategy::pure(avg[1].policy())});
    }
  }
  NfspResult result;
  result.episodes = episode;
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    result.average[seat] = avg[seat].policy();
    result.best_response[seat] =
        std::make_shared<const rl::QPolicy>(br[seat].snapshot(), spec.num_actions[seat], 0.0);
    result.sl_examples[seat] = static_cast<std::int64_t>(avg[seat].seen());
  }
  return result;
}

void IteratedConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  max_solver.validate();
  min_solver.validate();
  if (pool_capacity < 1) throw ConfigError("pool_capacity", "must be positive");
}

namespace {

enum class Scheme { kSmv1, kSmv2, kOppo };

using PolicyList = std::vector<std::shared_ptr<const rl::QPolicy>>;

MixedStrategy uniform_over(const PolicyList& ps) {
  return MixedStrategy::uniform(std::vector<std::shared_ptr<const BehaviorPolicy>>(ps.begin(), ps.end()));
}

rl::OpponentSampler pool_sampler(const PolicyList& pool, int num_actions) {
  core::OpponentPool op(num_actions);
  for (const auto& p : pool) op.add(p);
  return [op](RngStream& r) { return op.sample(r); };
}

IteratedResult run_iterated(Scheme scheme, const Environment& game, const IteratedConfig& config,
                            std::uint64_t seed, const ProgressCallback& on_progress) {
  config.validate();
  const GameSpec& spec = game.spec();
  const int na[2] = {spec.num_actions[0], spec.num_actions[1]};
  // Single models start from random networks; their greedy policies are the
  // initial opponents.
  nn::Mlp single[2];
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    RngStream init = RngStream::derive(seed, {0, static_cast<std::uint64_t>(seat)});
    const rl::SolverConfig& sc = seat == kMaxPlayer ? config.max_solver : config.min_solver;
    single[seat] = rl::DqnLearner(spec.observation_dim, na[seat], sc, init).online();
  }
  IteratedResult result;
  PolicyList max_pool, min_pool;
  auto greedy = [&](const nn::Mlp& net, Player seat) {
    return std::make_shared<const rl::QPolicy>(std::make_shared<const nn::Mlp>(net), na[seat], 0.0);
  };
  for (int t = 1; t <= config.iterations; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    try {
      // Max step.
      rl::OpponentSampler max_opponents;
      if (scheme == Scheme::kSmv1) {
        auto current_min = greedy(single[kMinPlayer], kMinPlayer);
        max_opponents = [current_min](RngStream&) { return current_min; };
      } else {
        max_opponents = pool_sampler(min_pool, na[kMinPlayer]);
      }
      std::shared_ptr<const rl::QPolicy> new_max;
      if (scheme == Scheme::kOppo) {
        new_max = rl::dqn_train_best_response(game, kMaxPlayer, max_opponents, config.max_solver,
                                              RngStream::derive(seed, {tu, 1}))
                      .policy;
        max_pool.push_back(new_max);
      } else {
        rl::DqnLearner learner(single[kMaxPlayer], config.max_solver);
        rl::dqn_train(learner, game, kMaxPlayer, max_opponents, config.max_solver,
                      RngStream::derive(seed, {tu, 1}));
        single[kMaxPlayer] = learner.online();
        new_max = greedy(single[kMaxPlayer], kMaxPlayer);
      }
      result.episodes += config.max_solver.max_episodes;

      // Min step.
      rl::OpponentSampler min_opponents;
      if (scheme == Scheme::kOppo) {
        min_opponents = pool_sampler(max_pool, na[kMaxPlayer]);
      } else {
        min_opponents = [new_max](RngStream&) { return new_max; };
      }
      if (scheme == Scheme::kSmv1) {
        rl::DqnLearner learner(single[kMinPlayer], config.min_solver);
        rl::dqn_train(learner, game, kMinPlayer, min_opponents, config.min_solver,
                      RngStream::derive(seed, {tu, 2}));
        single[kMinPlayer] = learner.online();
      } else {
        min_pool.push_back(rl::dqn_train_best_response(game, kMinPlayer, min_opponents,
                                                       config.min_solver, RngStream::derive(seed, {tu, 2}))
                               .policy);
        if (scheme == Scheme::kSmv2 && static_cast<int>(min_pool.size()) > config.pool_capacity)
          min_pool.erase(min_pool.begin());
      }
      result.episodes += config.min_solver.max_episodes;
    } catch (const DivergenceError& e) {
      throw DivergenceError("iteration " + std::to_string(t) + ": " + e.what());
    }

    switch (scheme) {
      case Scheme::kSmv1:
        result.max_policies = {greedy(single[kMaxPlayer], kMaxPlayer)};
        result.min_policies = {greedy(single[kMinPlayer], kMinPlayer)};
        break;
      case Scheme::kSmv2:
        result.max_policies = {greedy(single[kMaxPlayer], kMaxPlayer)};
        result.min_policies = min_pool;
        break;
      case Scheme::kOppo:
        result.max_policies = max_pool;
        result.min_policies = min_pool;
        break;
    }
    result.max_player = uniform_over(result.max_policies);
    result.min_player = uniform_over(result.min_policies);
    if (on_progress) on_progress({t, result.episodes, result.max_player, result.min_player});
  }
  return result;
}

}  // namespace

IteratedResult smv1_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress) {
  return run_iterated(Scheme::kSmv1, game, config, seed, on_progress);
}

IteratedResult smv2_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress) {
  return run_iterated(Scheme::kSmv2, game, config, seed, on_progress);
}

IteratedResult oppo_run(const Environment& game, const IteratedConfig& config, std::uint64_t seed,
                        const ProgressCallback& on_progress) {
  return run_iterated(Scheme::kOppo, game, config, seed, on_progress);
}

EmpiricalMetaGame estimate_meta_game(const Environment& game,
                                     std::span<const std::shared_ptr<const BehaviorPolicy>> rows,
                                     std::span<const std::shared_ptr<const BehaviorPolicy>> cols,
                                     std::int64_t sims_per_entry, std::uint64_t seed) {
  if (sims_per_entry < 1) throw ContractError("estimate_meta_game: sims_per_entry must be >= 1");
  EmpiricalMetaGame m;
  m.payoff.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  m.stderr_payoff.resizeLike(m.payoff);
  m.sims_per_entry = sims_per_entry;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const RolloutBatch b = rollout_batch(game, *rows[i], *cols[j], sims_per_entry,
                                           RngStream::derive(seed, {i, j}), false);
      m.payoff(i, j) = b.stats.mean_return;
      m.stderr_payoff(i, j) = b.stats.stderr_return;
    }
  }
  return m;
}

EmpiricalMetaGame exact_kuhn_meta_game(std::span<const std::shared_ptr<const BehaviorPolicy>> rows,
                                       std::span<const std::shared_ptr<const BehaviorPolicy>> cols) {
  EmpiricalMetaGame m;
  m.payoff.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  m.stderr_payoff = Eigen::MatrixXd::Zero(m.payoff.rows(), m.payoff.cols());
  std::vector<PolicyTable> col_tables;
  for (const auto& c : cols) col_tables.push_back(kuhn::tabulate(*c, kMinPlayer));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PolicyTable r = kuhn::tabulate(*rows[i], kMaxPlayer);
    for (std::size_t j = 0; j < cols.size(); ++j) m.payoff(i, j) = kuhn::expected_value(r, col_tables[j]);
  }
  return m;
}

MetaStrategy solve_meta_game(const Eigen::MatrixXd& payoff, int iterations) {
  if (payoff.size() == 0) throw ContractError("solve_meta_game: empty matrix");
  if (iterations < 1) throw ContractError("solve_meta_game: iterations must be >= 1");
  const Eigen::Index n = payoff.rows(), m = payoff.cols();
  Eigen::VectorXd regret_row = Eigen::VectorXd::Zero(n), regret_col = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sum_row = Eigen::VectorXd::Zero(n), sum_col = Eigen::VectorXd::Zero(m);
  for (int it = 0; it < iterations; ++it) {
    const std::vector<double> sr = regret_matching(std::span<const double>(regret_row.data(), n));
    const std::vector<double> sc = regret_matching(std::span<const double>(regret_col.data(), m));
    const Eigen::Map<const Eigen::VectorXd> x(sr.data(), n), y(sc.data(), m);
    const Eigen::VectorXd u_row = payoff * y;                 // row maximizes
    const Eigen::VectorXd u_col = -(payoff.transpose() * x);  // column minimizes
    regret_row.array() += u_row.array() - x.dot(u_row);
    regret_col.array() += u_col.array() - y.dot(u_col);
    sum_row += x;
    sum_col += y;
  }
  MetaStrategy s;
  sum_row /= sum_row.sum();
  sum_col /= sum_col.sum();
  s.row.assign(sum_row.data(), sum_row.data() + n);
  s.col.assign(sum_col.data(), sum_col.data() + m);
  return s;
}

void PsroConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  solver.validate();
  if (!exact_entries && sims_per_entry < 1) throw ConfigError("sims_per_entry", "must be positive");
  if (rm_iterations < 1) throw ConfigError("rm_iterations", "must be positive");
}

PsroResult psro_lite_run(const Environment& game, const PsroConfig& config, std::uint64_t seed,
                         const ProgressCallback& on_progress) {
  config.validate();
  if (game.spec().name != "kuhn") throw ConfigError("game", "PSRO-lite supports Kuhn poker only");
  const GameSpec& spec = game.spec();
  PsroResult result;
  for (Player seat : {kMaxPlayer, kMinPlayer})
    result.pools[seat].push_back(std::make_shared<const UniformRandomPolicy>(spec.num_actions[seat]));
  // Entry (i, j) always uses the stream derived from (i, j), so recomputing
  // the matrix reproduces earlier entries exactly.
  const std::uint64_t meta_seed = RngStream::derive(seed, {99}).next_u64();
  auto meta = [&]() {
    result.meta_game = config.exact_entries
                           ? exact_kuhn_meta_game(result.pools[0], result.pools[1])
                           : estimate_meta_game(game, result.pools[0], result.pools[1],
                                                config.sims_per_entry, meta_seed);
    result.meta_strategy = solve_meta_game(result.meta_game.payoff, config.rm_iterations);
  };
  meta();
  for (int t = 1; t <= config.iterations; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    // Both seats respond to the meta strategy from before this iteration.
    const MixedStrategy current[2] = {MixedStrategy{result.pools[0], result.meta_strategy.row},
                                      MixedStrategy{result.pools[1], result.meta_strategy.col}};
    for (Player seat : {kMaxPlayer, kMinPlayer}) {
      const MixedStrategy& opponents = current[1 - seat];
      rl::OpponentSampler sampler = [opponents](RngStream& r) {
        return opponents.components[opponents.sample_index(r)];
      };
      try {
        result.pools[seat].push_back(
            rl::dqn_train_best_response(game, seat, sampler, config.solver,
                                        RngStream::derive(seed, {tu, static_cast<std::uint64_t>(seat)}))
                .policy);
      } catch (const DivergenceError& e) {
        throw DivergenceError("iteration " + std::to_string(t) + ": " + e.what());
      }
      result.episodes += config.solver.max_episodes;
    }
    meta();
    if (on_progress)
      on_progress({t, result.episodes, MixedStrategy{result.pools[0], result.meta_strategy.row},
                   MixedStrategy{result.pools[1], result.meta_strategy.col}});
  }
  return result;
}

}  // namespace fpem::baselines
