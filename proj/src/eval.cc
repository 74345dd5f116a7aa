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

#include "fpem/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "fpem/errors.h"
#include "fpem/kuhn.h"
#include "fpem/rollout.h"

namespace fpem::eval {
namespace {

// Episodes are collected in chunks so memory stays bounded; episode k still
// uses rng.child(k), so results match one large batch.
constexpr std::int64_t kEvalChunk = 512;

void for_each_episode(const Environment& game, std::int64_t n, const RngStream& rng, const EpisodeJob& job,
                      const std::function<void(std::int64_t, const Trajectory&)>& visit) {
  for (std::int64_t first = 0; first < n; first += kEvalChunk) {
    const std::int64_t count = std::min(kEvalChunk, n - first);
    const std::vector<Trajectory> ts = collect_episodes(game, first, count, rng, job);
    for (std::int64_t i = 0; i < count; ++i) visit(first + i, ts[i]);
  }
}

}  // namespace

std::shared_ptr<const BehaviorPolicy> with_mode(const std::shared_ptr<const BehaviorPolicy>& policy,
                                                EvalMode mode, double epsilon) {
  if (mode == EvalMode::kStochastic) return policy;
  if (const auto* q = dynamic_cast<const rl::QPolicy*>(policy.get())) {
    const double eps = mode == EvalMode::kGreedy ? 0.0 : epsilon;
    if (eps == q->epsilon()) return policy;
    return std::make_shared<const rl::QPolicy>(q->shared_net(), q->num_actions(), eps);
  }
  if (const auto* f = dynamic_cast<const core::FpemPolicy*>(policy.get())) {
    std::vector<std::shared_ptr<const BehaviorPolicy>> comps;
    for (const auto& c : f->components()) comps.push_back(with_mode(c, mode, epsilon));
    return std::make_shared<const core::FpemPolicy>(f->selector(), comps, f->num_actions());
  }
  return policy;
}

MixedStrategy with_mode(const MixedStrategy& strategy, EvalMode mode, double epsilon) {
  MixedStrategy out{{}, strategy.weights};
  for (const auto& c : strategy.components) out.components.push_back(with_mode(c, mode, epsilon));
  return out;
}

PolicyTable flatten_kuhn(const MixedStrategy& strategy, Player seat) {
  std::vector<PolicyTable> tables;
  for (const auto& c : strategy.components) tables.push_back(kuhn::tabulate(*c, seat));
  const std::vector<double> prior = strategy.probabilities();
  if (tables.size() == 1) return tables.front();
  return kuhn::mixture_to_behavior(tables, seat, prior);
}

double nashconv_of(const Environment& game, const MixedStrategy& max_player,
                   const MixedStrategy& min_player, EvalMode mode, double epsilon) {
  if (game.spec().name != "kuhn") throw ConfigError("game", "NashConv is only available for Kuhn poker");
  const PolicyTable p1 = flatten_kuhn(with_mode(max_player, mode, epsilon), kMaxPlayer);
  const PolicyTable p2 = flatten_kuhn(with_mode(min_player, mode, epsilon), kMinPlayer);
  return kuhn::nash_conv(p1, p2);
}

MixedStrategy fpem_max_strategy(const core::FpemState& state, int num_actions) {
  return MixedStrategy::pure(state.policy(num_actions));
}

MixedStrategy fpem_min_strategy(const core::FpemState& state) {
  return MixedStrategy::uniform(std::vector<std::shared_ptr<const BehaviorPolicy>>(
      state.pool_policies.begin(), state.pool_policies.end()));
}

MatchResult head_to_head(const Environment& game, const MixedStrategy& a, const MixedStrategy& b,
                         std::int64_t n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ContractError("head_to_head: n_episodes must be >= 1");
  const bool swap_seats = game.spec().symmetric;
  const std::int64_t half = swap_seats ? n_episodes / 2 : n_episodes;
  const RngStream rng = RngStream::derive(seed, {0});
  auto job = [&](std::int64_t k, Environment& env, RngStream& r) {
    const BehaviorPolicy& pa = a.sample(r);
    const BehaviorPolicy& pb = b.sample(r);
    return k < half ? play_episode(env, pa, pb, r) : play_episode(env, pb, pa, r);
  };
  MatchResult m;
  double sum = 0.0, sum_sq = 0.0;
  for_each_episode(game, n_episodes, rng, job, [&](std::int64_t k, const Trajectory& t) {
    const Player seat = k < half ? kMaxPlayer : kMinPlayer;
    const int o = rl::seat_outcome(t, seat);
    m.wins += o > 0;
    m.losses += o < 0;
    m.ties += o == 0;
    const double ret = t.episode_return[seat];
    sum += ret;
    sum_sq += ret * ret;
  });
  m.episodes = n_episodes;
  const double n = static_cast<double>(n_episodes);
  m.win_rate = static_cast<double>(m.wins) / n;
  m.mean_return = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * m.mean_return * m.mean_return) / (n - 1)) : 0.0;
  m.stderr_return = std::sqrt(var / n);
  return m;
}

void AdversaryConfig::validate() const {
  rl::SolverConfig s = solver;
  s.max_episodes = budget;
  s.validate();
  if (budget < 0) throw ConfigError("adversary_budget", "must be nonnegative");
  if (plateau_window < 1) throw ConfigError("plateau_window", "must be positive");
  if (plateau_patience < 1) throw ConfigError("plateau_patience", "must be positive");
  if (eval_episodes < 1) throw ConfigError("eval_episodes", "must be positive");
}

AdversaryResult retrain_adversary(const Environment& game, const MixedStrategy& frozen,
                                  Player frozen_seat, const AdversaryConfig& config,
                                  std::uint64_t seed) {
  config.validate();
  const Player seat = 1 - frozen_seat;
  rl::SolverConfig solver = config.solver;
  solver.max_episodes = config.budget;
  solver.use_stop_criterion = false;
  const GameSpec& spec = game.spec();
  RngStream init = RngStream::derive(seed, {0});
  rl::DqnLearner learner(spec.observation_dim, spec.num_actions[seat], solver, init);

  // Moving averages over consecutive windows of the adversary's return.
  double window_sum = 0.0;
  std::int64_t in_window = 0;
  std::optional<double> previous_mean;
  int flat_windows = 0;
  bool plateaued = false;
  rl::TrainHooks hooks;
  hooks.on_episode = [&](std::int64_t, const Trajectory& t) {
    window_sum += t.episode_return[seat];
    if (++in_window < config.plateau_window) return;
    const double mean = window_sum / static_cast<double>(in_window);
    if (previous_mean && mean - *previous_mean < config.plateau_tolerance) {
      ++flat_windows;
    } else {
      flat_windows = 0;
    }
    previous_mean = mean;
    window_sum = 0.0;
    in_window = 0;
    if (config.plateau_stop && flat_windows >= config.plateau_patience) plateaued = true;
  };
  hooks.should_stop = [&] { return plateaued; };
  const MixedStrategy frozen_copy = frozen;
  rl::OpponentSampler sampler = [frozen_copy](RngStream& r) {
    return frozen_copy.components[frozen_copy.sample_index(r)];
  };
  AdversaryResult result;
  if (config.budget > 0) {
    const rl::TrainingLog log =
        rl::dqn_train(learner, game, seat, sampler, solver, RngStream::derive(seed, {1}), hooks);
    result.episodes_trained = log.episodes;
  }
  result.plateaued = plateaued;
  result.adversary = std::make_shared<const rl::QPolicy>(learner.snapshot(), spec.num_actions[seat], 0.0);
  // Frozen model's return with seats fixed as trained.
  const RngStream eval_rng = RngStream::derive(seed, {2});
  auto job = [&](std::int64_t, Environment& env, RngStream& r) {
    const BehaviorPolicy& f = frozen.sample(r);
    return frozen_seat == kMaxPlayer ? play_episode(env, f, *result.adversary, r)
                                     : play_episode(env, *result.adversary, f, r);
  };
  double sum = 0.0, sum_sq = 0.0;
  for_each_episode(game, config.eval_episodes, eval_rng, job, [&](std::int64_t, const Trajectory& t) {
    sum += t.episode_return[frozen_seat];
    sum_sq += t.episode_return[frozen_seat] * t.episode_return[frozen_seat];
  });
  const double n = static_cast<double>(config.eval_episodes);
  const double mean = sum / n;
  result.avg_loss = -mean;
  result.stderr_loss = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) / n) : 0.0;
  return result;
}

void MetricsRecord::validate() const {
  if (nashconv && !(*nashconv >= -1e-9)) throw ContractError("metrics: negative NashConv");
  if (win_rate && !(*win_rate >= 0.0 && *win_rate <= 1.0))
    throw ContractError("metrics: win rate outside [0, 1]");
  for (const std::string* f : {&run_id, &algo, &game}) {
    if (f->find_first_of(",\n") != std::string::npos)
      throw ContractError("metrics: text fields may not contain commas or newlines");
  }
}

namespace {

std::string opt(const std::optional<double>& x) {
  if (!x) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", *x);
  return buf;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw FormatError("metrics: bad number '" + s + "'");
  return v;
}

}  // namespace

std::string format_record(const MetricsRecord& r) {
  r.validate();
  std::ostringstream s;
  s << r.run_id << ',' << r.algo << ',' << r.game << ',' << r.iteration << ',' << r.episodes << ','
    << opt(r.nashconv) << ',' << opt(r.avg_loss) << ',' << opt(r.win_rate) << ',' << opt(r.stderr_value)
    << ',' << r.seed;
  return s.str();
}

MetricsRecord parse_record(const std::string& line) {
  std::vector<std::string> f;
  std::string cell;
  std::stringstream s(line);
  while (std::getline(s, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.push_back("");
  if (f.size() != 10) throw FormatError("metrics: expected 10 columns, got " + std::to_string(f.size()));
  try {
    MetricsRecord r;
    r.run_id = f[0];
    r.algo = f[1];
    r.game = f[2];
    r.iteration = std::stoi(f[3]);
    r.episodes = std::stoll(f[4]);
    r.nashconv = parse_opt(f[5]);
    r.avg_loss = parse_opt(f[6]);
    r.win_rate = parse_opt(f[7]);
    r.stderr_value = parse_opt(f[8]);
    r.seed = std::stoull(f[9]);
    return r;
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("metrics: malformed row: ") + line);
  }
}

void export_metrics(const std::vector<MetricsRecord>& records, const std::string& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    if (header != kMetricsHeader) throw FormatError(path + ": unexpected metrics header");
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  if (fresh) out << kMetricsHeader << '\n';
  for (const MetricsRecord& r : records) out << format_record(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError(path + ": unexpected metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_record(line));
  }
  return out;
}

}  // namespace fpem::eval
