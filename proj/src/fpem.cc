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

#include "fpem/fpem.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fpem/rollout.h"

namespace fpem::core {

void BasePolicySet::add(std::shared_ptr<const rl::QPolicy> policy) {
  if (!policy) throw ContractError("base policy set: null policy");
  if (size() >= capacity_) throw ContractError("base policy set is full");
  policies_.push_back(std::move(policy));
}

SelectorModel::SelectorModel(int input_dim, std::vector<int> hidden)
    : input_dim_(input_dim), hidden_(std::move(hidden)) {}

void SelectorModel::grow(RngStream& init_rng) {
  if (!online_) {
    std::vector<int> sizes = {input_dim_};
    sizes.insert(sizes.end(), hidden_.begin(), hidden_.end());
    sizes.push_back(1);
    online_ = std::make_shared<nn::Mlp>(sizes, init_rng);
    return;
  }
  online_->add_output_unit();
}

nn::Mlp& SelectorModel::online() {
  if (!online_) throw ContractError("selector has no components yet");
  return *online_;
}

const nn::Mlp& SelectorModel::online() const {
  if (!online_) throw ContractError("selector has no components yet");
  return *online_;
}

const nn::Mlp& SelectorModel::target() const {
  if (!target_) throw ContractError("selector target not set");
  return *target_;
}

std::shared_ptr<const nn::Mlp> SelectorModel::online_snapshot() const {
  if (!online_) return nullptr;
  return std::make_shared<const nn::Mlp>(*online_);
}

void SelectorModel::set(nn::Mlp online, std::optional<nn::Mlp> target) {
  online_ = std::make_shared<nn::Mlp>(std::move(online));
  target_ = target ? std::make_shared<const nn::Mlp>(std::move(*target)) : nullptr;
}

FpemPolicy::FpemPolicy(std::shared_ptr<const nn::Mlp> selector,
                       std::vector<std::shared_ptr<const BehaviorPolicy>> components, int num_actions)
    : selector_(std::move(selector)), components_(std::move(components)), num_actions_(num_actions) {
  if (components_.empty()) throw ContractError("FPEM policy needs at least one base policy");
  if (selector_ == nullptr && components_.size() != 1)
    throw ContractError("FPEM policy without selector must have one component");
  if (selector_ != nullptr && selector_->output_dim() != num_components())
    throw ContractError("selector outputs " + std::to_string(selector_->output_dim()) + " != " +
                        std::to_string(num_components()) + " base policies");
}

std::vector<double> FpemPolicy::selector_distribution(const InfoState& info) const {
  if (selector_ == nullptr) return {1.0};
  const Eigen::VectorXd p = nn::softmax(selector_->forward(info.features));
  return std::vector<double>(p.data(), p.data() + p.size());
}

std::vector<double> FpemPolicy::action_distribution(const InfoState& info) const {
  const std::vector<double> w = selector_distribution(info);
  std::vector<double> mix(num_actions_, 0.0);
  for (int j = 0; j < num_components(); ++j) {
    if (w[j] == 0.0) continue;
    const std::vector<double> d = components_[j]->action_distribution(info);
    for (int a = 0; a < num_actions_; ++a) mix[a] += w[j] * d[a];
  }
  return mix;
}

Decision FpemPolicy::decide(const InfoState& info, RngStream& rng) const {
  const std::vector<double> w = selector_distribution(info);
  const int j = num_components() == 1 ? 0 : static_cast<int>(rng.sample_discrete(w));
  Decision d = components_[j]->decide(info, rng);
  d.component = j;
  return d;
}

std::string FpemPolicy::describe() const {
  return "fpem(" + std::to_string(num_components()) + ")";
}

Decision LabeledPolicy::decide(const InfoState& info, RngStream& rng) const {
  Decision d = inner_->decide(info, rng);
  d.component = index_;
  return d;
}

std::shared_ptr<const BehaviorPolicy> OpponentPool::sample(RngStream& rng) const {
  if (policies_.empty()) return fallback_;
  return policies_[rng.uniform_int(policies_.size())];
}

std::shared_ptr<const BehaviorPolicy> sample_training_opponent(
    Role role, int t, const OpponentPool& pool, const std::shared_ptr<const FpemPolicy>& previous,
    const std::shared_ptr<const BehaviorPolicy>& newest, RngStream& rng) {
  if (t < 1) throw ContractError("sample_training_opponent: t must be >= 1");
  if (role == Role::kMax) return pool.sample(rng);
  if (rng.uniform() * t < 1.0) return newest;
  if (!previous) throw ContractError("sample_training_opponent: no previous mixture for t > 1");
  return previous;
}

namespace {

Eigen::MatrixXd example_matrix(const std::vector<SelectorExample>& data, std::size_t begin,
                               std::size_t end, int dim, const std::vector<std::size_t>* order) {
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    const SelectorExample& e = data[order ? (*order)[i] : i];
    if (static_cast<int>(e.features.size()) != dim)
      throw std::invalid_argument("selector example has wrong feature length");
    for (int r = 0; r < dim; ++r) x(r, static_cast<Eigen::Index>(i - begin)) = e.features[r];
  }
  return x;
}

nn::CrossEntropyTarget example_labels(const std::vector<SelectorExample>& data, std::size_t begin,
                                      std::size_t end, int components,
                                      const std::vector<std::size_t>* order) {
  nn::CrossEntropyTarget t;
  for (std::size_t i = begin; i < end; ++i) {
    const int y = data[order ? (*order)[i] : i].label;
    if (y < 0 || y >= components)
      throw std::invalid_argument("selector label " + std::to_string(y) + " out of range for " +
                                  std::to_string(components) + " base policies");
    t.labels.push_back(y);
  }
  return t;
}

}  // namespace

double selector_cross_entropy(const nn::Mlp& selector, const std::vector<SelectorExample>& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  constexpr std::size_t kChunk = 4096;
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(data.size(), begin + kChunk);
    const Eigen::MatrixXd x = example_matrix(data, begin, end, selector.input_dim(), nullptr);
    const nn::CrossEntropyTarget y = example_labels(data, begin, end, selector.output_dim(), nullptr);
    total += nn::loss_value(selector, x, y) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(data.size());
}

double train_selector(nn::Mlp& selector, const std::vector<SelectorExample>& data,
                      const SelectorTrainConfig& config, RngStream& rng) {
  if (data.empty()) throw ContractError("train_selector: empty memory");
  // Validates every label before any update.
  example_labels(data, 0, data.size(), selector.output_dim(), nullptr);
  nn::OptimizerState optimizer(config.optimizer);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const Eigen::MatrixXd x = example_matrix(data, begin, end, selector.input_dim(), &order);
      const nn::CrossEntropyTarget y = example_labels(data, begin, end, selector.output_dim(), &order);
      nn::apply_update(selector, nn::backward(selector, x, y).gradients, optimizer);
    }
  }
  return selector_cross_entropy(selector, data);
}

void FpemConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  max_solver.validate();
  min_solver.validate();
  for (int h : selector_hidden) {
    if (h < 1) throw ConfigError("selector_hidden", "layer widths must be positive");
  }
  if (selector_training.epochs < 0) throw ConfigError("selector_epochs", "must be nonnegative");
  if (selector_training.batch_size < 1) throw ConfigError("selector_batch_size", "must be positive");
  if (reservoir_capacity < 1) throw ConfigError("reservoir_capacity", "must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction", "must lie in [0, 1)");
  if (pretrain_episodes < 0) throw ConfigError("pretrain_episodes", "must be nonnegative");
}

std::shared_ptr<const FpemPolicy> FpemState::policy(int num_actions) const {
  std::vector<std::shared_ptr<const BehaviorPolicy>> components(base_policies.policies().begin(),
                                                                base_policies.policies().end());
  return std::make_shared<const FpemPolicy>(
      components.size() > 1 ? selector.online_snapshot() : nullptr, components, num_actions);
}

OpponentPool FpemState::opponent_pool(int num_actions) const {
  OpponentPool pool(num_actions);
  for (const auto& p : pool_policies) pool.add(p);
  return pool;
}

namespace {

std::size_t holdout_capacity(const FpemConfig& c) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(
                                      std::ceil(c.holdout_fraction * c.reservoir_capacity)));
}

}  // namespace

FpemState initial_state(const Environment& game, const FpemConfig& config) {
  config.validate();
  FpemState s;
  s.base_policies = BasePolicySet(config.iterations);
  s.selector = SelectorModel(game.spec().observation_dim, config.selector_hidden);
  s.memory = Reservoir<SelectorExample>(static_cast<std::size_t>(config.reservoir_capacity));
  s.heldout = Reservoir<SelectorExample>(holdout_capacity(config));
  return s;
}

namespace {

enum Phase : std::uint64_t {
  kMaxInit = 0,
  kMaxTrain = 1,
  kSelectorInit = 2,
  kMinInit = 3,
  kMinTrain = 4,
  kMemory = 5,
  kSelectorTrain = 6,
};

rl::DqnLearner make_learner(const Environment& game, Player seat, const rl::SolverConfig& config,
                            const FpemState& state, RngStream init_rng) {
  if (state.pretrained[seat]) return rl::DqnLearner(*state.pretrained[seat], config);
  return rl::DqnLearner(game.spec().observation_dim, game.spec().num_actions[seat], config, init_rng);
}

void pretrain(const Environment& game, const FpemConfig& config, std::uint64_t seed, FpemState& state) {
  if (config.pretrain_episodes == 0 || state.pretrained[0]) return;
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    rl::SolverConfig c = seat == kMaxPlayer ? config.max_solver : config.min_solver;
    c.max_episodes = config.pretrain_episodes;
    c.use_stop_criterion = false;
    auto uniform = std::make_shared<const UniformRandomPolicy>(game.spec().num_actions[1 - seat]);
    const auto r = rl::dqn_train_best_response(
        game, seat, [uniform](RngStream&) { return uniform; }, c,
        RngStream::derive(seed, {0, static_cast<std::uint64_t>(seat)}));
    state.pretrained[seat] = r.policy->shared_net();
  }
}

std::vector<std::shared_ptr<const BehaviorPolicy>> as_behaviors(
    const std::vector<std::shared_ptr<const rl::QPolicy>>& ps, std::size_t count) {
  return std::vector<std::shared_ptr<const BehaviorPolicy>>(ps.begin(), ps.begin() + count);
}

// Records the max player's (h, j) pairs of one episode.
class PairRecorder {
 public:
  PairRecorder(FpemState& state, double holdout_fraction, RngStream rng)
      : state_(state), holdout_fraction_(holdout_fraction), rng_(rng) {}

  void record(const Trajectory& t) {
    for (const Step& step : t.steps) {
      for (const Move& m : step.moves) {
        if (m.info.player != kMaxPlayer) continue;
        if (m.component < 0) throw ContractError("max-side decision carries no base-policy index");
        SelectorExample e{std::vector<float>(m.info.features.begin(), m.info.features.end()),
                          m.info.key, m.component};
        if (holdout_fraction_ > 0.0 && rng_.bernoulli(holdout_fraction_)) {
          state_.heldout.insert(std::move(e), rng_);
        } else {
          state_.memory.insert(std::move(e), rng_);
        }
      }
    }
  }

 private:
  FpemState& state_;
  double holdout_fraction_;
  RngStream rng_;
};

void finish_iteration(const Environment& game, const FpemConfig& config, std::uint64_t seed, int t,
                      FpemState& state, std::shared_ptr<const rl::QPolicy> min_policy,
                      IterationReport report, const IterationCallback& on_iteration) {
  RngStream train_rng = RngStream::derive(seed, {static_cast<std::uint64_t>(t), kSelectorTrain});
  nn::Mlp& w = state.selector.online();
  // A one-output selector is already exact (zero loss), so training starts at t = 2.
  if (state.memory.size() == 0) {
    report.selector_loss = std::numeric_limits<double>::quiet_NaN();
  } else if (w.output_dim() == 1) {
    report.selector_loss = selector_cross_entropy(w, state.memory.items());
  } else {
    report.selector_loss = train_selector(w, state.memory.items(), config.selector_training, train_rng);
  }
  report.heldout_loss = selector_cross_entropy(w, state.heldout.items());
  report.heldout_size = static_cast<std::int64_t>(state.heldout.size());
  if (!w.all_finite()) throw DivergenceError("iteration " + std::to_string(t) + ": selector diverged");
  state.selector.sync_target();
  state.pool_policies.push_back(std::move(min_policy));
  state.iteration = t;
  state.episodes += report.max_episodes + report.min_episodes;
  report.iteration = t;
  report.episodes = state.episodes;
  report.components = state.base_policies.size();
  state.reports.push_back(report);
  (void)game;
  if (on_iteration) on_iteration(state, report);
}

FpemState start(const Environment& game, const FpemConfig& config, std::uint64_t seed,
                std::optional<FpemState>& resume) {
  config.validate();
  FpemState state = resume ? std::move(*resume) : initial_state(game, config);
  if (state.iteration > config.iterations)
    throw ConfigError("iterations", "resume state is past the configured iteration count");
  pretrain(game, config, seed, state);
  return state;
}

std::string with_iteration(int t, const std::exception& e) {
  return "iteration " + std::to_string(t) + ": " + e.what();
}

}  // namespace

FpemState run_fpem(const Environment& game, const FpemConfig& config, std::uint64_t seed,
                   const IterationCallback& on_iteration, std::optional<FpemState> resume) {
  FpemState state = start(game, config, seed, resume);
  const int na_max = game.spec().num_actions[kMaxPlayer];
  const int na_min = game.spec().num_actions[kMinPlayer];
  for (int t = state.iteration + 1; t <= config.iterations; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    try {
      IterationReport report;
      // Max step: a fresh best response to the uniform opponent pool.
      const OpponentPool pool = state.opponent_pool(na_min);
      rl::DqnLearner max_learner =
          make_learner(game, kMaxPlayer, config.max_solver, state, RngStream::derive(seed, {tu, kMaxInit}));
      const rl::TrainingLog max_log = rl::dqn_train(
          max_learner, game, kMaxPlayer, [&pool](RngStream& r) { return pool.sample(r); },
          config.max_solver, RngStream::derive(seed, {tu, kMaxTrain}));
      report.max_episodes = max_log.episodes;
      auto newest = std::make_shared<const rl::QPolicy>(max_learner.snapshot(), na_max, 0.0);
      state.base_policies.add(newest);
      RngStream grow_rng = RngStream::derive(seed, {tu, kSelectorInit});
      state.selector.grow(grow_rng);

      // Min step against newest w.p. 1/t, else W' o pi_{1:t-1}.
      if (config.reservoir_scope == ReservoirScope::kIteration) {
        state.memory.clear();
        state.heldout.clear();
      }
      std::shared_ptr<const FpemPolicy> previous;
      if (t > 1)
        previous = std::make_shared<const FpemPolicy>(
            t > 2 ? state.selector.target_snapshot() : nullptr,
            as_behaviors(state.base_policies.policies(), t - 1), na_max);
      auto labeled = std::make_shared<const LabeledPolicy>(newest, t - 1);
      PairRecorder recorder(state, config.holdout_fraction, RngStream::derive(seed, {tu, kMemory}));
      rl::TrainHooks hooks;
      hooks.on_episode = [&recorder](std::int64_t, const Trajectory& tr) { recorder.record(tr); };
      rl::DqnLearner min_learner =
          make_learner(game, kMinPlayer, config.min_solver, state, RngStream::derive(seed, {tu, kMinInit}));
      const rl::TrainingLog min_log = rl::dqn_train(
          min_learner, game, kMinPlayer,
          [&](RngStream& r) { return sample_training_opponent(Role::kMin, t, pool, previous, labeled, r); },
          config.min_solver, RngStream::derive(seed, {tu, kMinTrain}), hooks);
      report.min_episodes = min_log.episodes;
      finish_iteration(game, config, seed, t, state,
                       std::make_shared<const rl::QPolicy>(min_learner.snapshot(), na_min, 0.0), report,
                       on_iteration);
    } catch (const DivergenceError& e) {
      throw DivergenceError(with_iteration(t, e));
    }
  }
  return state;
}

namespace {

// One learner of the simultaneous variant.
struct Side {
  Side(rl::DqnLearner l, Player s, const rl::SolverConfig& c, RngStream collect, RngStream learn)
      : learner(std::move(l)), seat(s), config(c), window(c.window), collect_rng(collect), learn_rng(learn) {}

  rl::DqnLearner learner;
  Player seat;
  rl::SolverConfig config;
  rl::WindowCounter window;
  RngStream collect_rng;
  RngStream learn_rng;
  std::int64_t episodes = 0;
  bool done = false;

  double epsilon(std::int64_t k) const { return config.epsilon.at(k, config.max_episodes); }
  std::shared_ptr<const rl::QPolicy> explorer(int num_actions) const {
    return std::make_shared<const rl::QPolicy>(learner.snapshot(), num_actions, epsilon(episodes));
  }
};

// Collects one chunk for side and learns from it.
void step_side(const Environment& game, Side& side, const rl::OpponentSampler& opponents,
               const std::function<void(const Trajectory&)>& on_episode) {
  const std::int64_t count =
      std::min<std::int64_t>(side.config.learning_frequency, side.config.max_episodes - side.episodes);
  const int na = game.spec().num_actions[side.seat];
  const std::shared_ptr<const nn::Mlp> net = side.learner.snapshot();
  auto job = [&](std::int64_t k, Environment& env, RngStream& r) {
    const std::shared_ptr<const BehaviorPolicy> opponent = opponents(r);
    const rl::QPolicy me(net, na, side.epsilon(k));
    if (side.seat == kMaxPlayer) return play_episode(env, me, *opponent, r);
    return play_episode(env, *opponent, me, r);
  };
  const std::vector<Trajectory> batch = collect_episodes(game, side.episodes, count, side.collect_rng, job);
  for (const Trajectory& t : batch) {
    side.learner.observe_all(player_transitions(t, side.seat));
    side.window.add(rl::seat_outcome(t, side.seat));
    if (on_episode) on_episode(t);
  }
  side.episodes += count;
  side.learner.learn(side.learn_rng);
  if (side.episodes >= side.config.max_episodes) side.done = true;
  if (side.config.use_stop_criterion && side.window.full() &&
      rl::stop_criterion(side.window.stats(), side.config.stop_delta))
    side.done = true;
}

}  // namespace

FpemState run_fpem_v1(const Environment& game, const FpemConfig& config, std::uint64_t seed,
                      const IterationCallback& on_iteration, std::optional<FpemState> resume) {
  FpemState state = start(game, config, seed, resume);
  const int na_max = game.spec().num_actions[kMaxPlayer];
  const int na_min = game.spec().num_actions[kMinPlayer];
  for (int t = state.iteration + 1; t <= config.iterations; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    try {
      if (config.reservoir_scope == ReservoirScope::kIteration) {
        state.memory.clear();
        state.heldout.clear();
      }
      Side max_side(make_learner(game, kMaxPlayer, config.max_solver, state,
                                 RngStream::derive(seed, {tu, kMaxInit})),
                    kMaxPlayer, config.max_solver, RngStream::derive(seed, {tu, kMaxTrain, 0}),
                    RngStream::derive(seed, {tu, kMaxTrain, 1}));
      Side min_side(make_learner(game, kMinPlayer, config.min_solver, state,
                                 RngStream::derive(seed, {tu, kMinInit})),
                    kMinPlayer, config.min_solver, RngStream::derive(seed, {tu, kMinTrain, 0}),
                    RngStream::derive(seed, {tu, kMinTrain, 1}));
      std::shared_ptr<const FpemPolicy> previous;
      if (t > 1)
        previous = std::make_shared<const FpemPolicy>(
            t > 2 ? state.selector.target_snapshot() : nullptr,
            as_behaviors(state.base_policies.policies(), t - 1), na_max);
      PairRecorder recorder(state, config.holdout_fraction, RngStream::derive(seed, {tu, kMemory}));
      const OpponentPool frozen_pool = state.opponent_pool(na_min);
      while (!max_side.done || !min_side.done) {
        if (!max_side.done) {
          // Pool of frozen min policies plus the current min learner.
          OpponentPool pool = frozen_pool;
          pool.add(min_side.explorer(na_min));
          step_side(game, max_side, [&pool](RngStream& r) { return pool.sample(r); }, {});
        }
        if (!min_side.done) {
          auto labeled = std::make_shared<const LabeledPolicy>(max_side.explorer(na_max), t - 1);
          step_side(
              game, min_side,
              [&](RngStream& r) {
                return sample_training_opponent(Role::kMin, t, frozen_pool, previous, labeled, r);
              },
              [&recorder](const Trajectory& tr) { recorder.record(tr); });
        }
      }
      state.base_policies.add(std::make_shared<const rl::QPolicy>(max_side.learner.snapshot(), na_max, 0.0));
      RngStream grow_rng = RngStream::derive(seed, {tu, kSelectorInit});
      state.selector.grow(grow_rng);
      IterationReport report;
      report.max_episodes = max_side.episodes;
      report.min_episodes = min_side.episodes;
      finish_iteration(game, config, seed, t, state,
                       std::make_shared<const rl::QPolicy>(min_side.learner.snapshot(), na_min, 0.0),
                       report, on_iteration);
    } catch (const DivergenceError& e) {
      throw DivergenceError(with_iteration(t, e));
    }
  }
  return state;
}

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_reservoir(const Reservoir<SelectorExample>& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "seen " << r.seen() << "\n";
  char buf[32];
  for (const SelectorExample& e : r.items()) {
    out << e.label << ' ' << e.key << ' ' << e.features.size();
    for (float f : e.features) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(f));
      out << buf;
    }
    out << '\n';
  }
}

void read_reservoir(Reservoir<SelectorExample>& r, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing reservoir file " + path);
  std::string word;
  std::uint64_t seen = 0;
  if (!(in >> word >> seen) || word != "seen") throw FormatError("bad reservoir header in " + path);
  std::vector<SelectorExample> items;
  SelectorExample e;
  std::size_t n = 0;
  while (in >> e.label >> e.key >> n) {
    e.features.assign(n, 0.0f);
    for (float& f : e.features) {
      if (!(in >> f)) throw FormatError("truncated reservoir file " + path);
    }
    items.push_back(e);
  }
  r.assign(std::move(items), seen);
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed line in " + path + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::string& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError(path + ": missing key " + key);
  return it->second;
}

}  // namespace

void save_state(const FpemState& state, const FpemConfig& config, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream s;
  s << "format=fpem-state-1\n";
  s << "iteration=" << state.iteration << "\n";
  s << "episodes=" << state.episodes << "\n";
  s << "base_policies=" << state.base_policies.size() << "\n";
  for (int j = 0; j < state.base_policies.size(); ++j) {
    s << "base_epsilon_" << j << "=" << fmt_double(state.base_policies.at(j).epsilon()) << "\n";
    nn::save_mlp(dir + "/base_" + std::to_string(j) + ".ckpt", state.base_policies.at(j).net());
  }
  s << "pool=" << state.pool_policies.size() << "\n";
  for (std::size_t j = 0; j < state.pool_policies.size(); ++j) {
    s << "pool_epsilon_" << j << "=" << fmt_double(state.pool_policies[j]->epsilon()) << "\n";
    nn::save_mlp(dir + "/pool_" + std::to_string(j) + ".ckpt", state.pool_policies[j]->net());
  }
  s << "selector_components=" << state.selector.num_components() << "\n";
  if (state.selector.num_components() > 0) nn::save_mlp(dir + "/selector.ckpt", state.selector.online());
  s << "selector_target=" << (state.selector.has_target() ? 1 : 0) << "\n";
  if (state.selector.has_target()) nn::save_mlp(dir + "/selector_target.ckpt", state.selector.target());
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    s << "pretrained_" << seat << "=" << (state.pretrained[seat] ? 1 : 0) << "\n";
    if (state.pretrained[seat])
      nn::save_mlp(dir + "/pretrained_" + std::to_string(seat) + ".ckpt", *state.pretrained[seat]);
  }
  const bool keep_memory = config.reservoir_scope == ReservoirScope::kRun;
  s << "reservoir=" << (keep_memory ? 1 : 0) << "\n";
  if (keep_memory) {
    write_reservoir(state.memory, dir + "/memory.txt");
    write_reservoir(state.heldout, dir + "/heldout.txt");
  }
  s << "reports=" << state.reports.size() << "\n";
  for (std::size_t i = 0; i < state.reports.size(); ++i) {
    const IterationReport& r = state.reports[i];
    s << "report_" << i << "=" << r.iteration << "," << r.episodes << "," << r.max_episodes << ","
      << r.min_episodes << "," << fmt_double(r.selector_loss) << "," << fmt_double(r.heldout_loss) << ","
      << r.heldout_size << "," << r.components << "\n";
  }
  std::ofstream out(dir + "/state.txt", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + dir + "/state.txt");
  out << s.str();
}

FpemState load_state(const Environment& game, const FpemConfig& config, const std::string& dir) {
  const std::string path = dir + "/state.txt";
  const auto kv = read_key_values(path);
  if (require(kv, "format", path) != "fpem-state-1") throw FormatError(path + ": unknown format");
  FpemState state = initial_state(game, config);
  state.iteration = std::stoi(require(kv, "iteration", path));
  state.episodes = std::stoll(require(kv, "episodes", path));
  const int na_max = game.spec().num_actions[kMaxPlayer];
  const int na_min = game.spec().num_actions[kMinPlayer];
  const int n_base = std::stoi(require(kv, "base_policies", path));
  for (int j = 0; j < n_base; ++j) {
    const double eps = std::stod(require(kv, "base_epsilon_" + std::to_string(j), path));
    auto net = std::make_shared<const nn::Mlp>(nn::load_mlp(dir + "/base_" + std::to_string(j) + ".ckpt"));
    state.base_policies.add(std::make_shared<const rl::QPolicy>(net, na_max, eps));
  }
  const int n_pool = std::stoi(require(kv, "pool", path));
  for (int j = 0; j < n_pool; ++j) {
    const double eps = std::stod(require(kv, "pool_epsilon_" + std::to_string(j), path));
    auto net = std::make_shared<const nn::Mlp>(nn::load_mlp(dir + "/pool_" + std::to_string(j) + ".ckpt"));
    state.pool_policies.push_back(std::make_shared<const rl::QPolicy>(net, na_min, eps));
  }
  if (std::stoi(require(kv, "selector_components", path)) > 0) {
    std::optional<nn::Mlp> target;
    if (require(kv, "selector_target", path) == "1") target = nn::load_mlp(dir + "/selector_target.ckpt");
    state.selector.set(nn::load_mlp(dir + "/selector.ckpt"), std::move(target));
    if (state.selector.num_components() != n_base)
      throw FormatError(path + ": selector head does not match the base policy count");
  }
  for (Player seat : {kMaxPlayer, kMinPlayer}) {
    if (require(kv, "pretrained_" + std::to_string(seat), path) == "1")
      state.pretrained[seat] = std::make_shared<const nn::Mlp>(
          nn::load_mlp(dir + "/pretrained_" + std::to_string(seat) + ".ckpt"));
  }
  if (require(kv, "reservoir", path) == "1") {
    read_reservoir(state.memory, dir + "/memory.txt");
    read_reservoir(state.heldout, dir + "/heldout.txt");
  } else if (config.reservoir_scope == ReservoirScope::kRun && state.iteration > 0) {
    throw FormatError(path + ": run-scope resume needs the saved reservoir");
  }
  const int n_reports = std::stoi(require(kv, "reports", path));
  for (int i = 0; i < n_reports; ++i) {
    std::stringstream row(require(kv, "report_" + std::to_string(i), path));
    IterationReport r;
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(row, f, ',')) fields.push_back(f);
    if (fields.size() != 8) throw FormatError(path + ": malformed report row");
    r.iteration = std::stoi(fields[0]);
    r.episodes = std::stoll(fields[1]);
    r.max_episodes = std::stoll(fields[2]);
    r.min_episodes = std::stoll(fields[3]);
    r.selector_loss = std::stod(fields[4]);
    r.heldout_loss = std::stod(fields[5]);
    r.heldout_size = std::stoll(fields[6]);
    r.components = std::stoi(fields[7]);
    state.reports.push_back(r);
  }
  return state;
}

}  // namespace fpem::core
