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

#ifndef FPEM_FPEM_H_
#define FPEM_FPEM_H_

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fpem/errors.h"
#include "fpem/game.h"
#include "fpem/nn.h"
#include "fpem/rl.h"
#include "fpem/rng.h"

// Fictitious play with expanding models: a growing set of frozen base
// policies combined by a learned per-state selector, trained against an
// opponent pool.
namespace fpem::core {

// Algorithm R: after n > k insertions every item seen so far is retained
// with probability k / n.
template <typename T>
class Reservoir {
 public:
  explicit Reservoir(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("reservoir capacity must be positive");
  }

  void insert(T item, RngStream& rng) {
    ++seen_;
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
      return;
    }
    const std::uint64_t r = rng.uniform_int(seen_);
    if (r < capacity_) items_[r] = std::move(item);
  }

  void clear() {
    items_.clear();
    seen_ = 0;
  }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t seen() const { return seen_; }
  const std::vector<T>& items() const { return items_; }
  // For restoring snapshots.
  void assign(std::vector<T> items, std::uint64_t seen) {
    if (items.size() > capacity_ || seen < items.size())
      throw ContractError("reservoir: inconsistent snapshot");
    items_ = std::move(items);
    seen_ = seen;
  }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<T> items_;
};

// One (h, j) pair: the information state and the index of the base policy
// executed there.
struct SelectorExample {
  std::vector<float> features;
  std::string key;
  int label = 0;
};

// Frozen base policies; append-only up to capacity.
class BasePolicySet {
 public:
  explicit BasePolicySet(int capacity) : capacity_(capacity) {}

  void add(std::shared_ptr<const rl::QPolicy> policy);
  int size() const { return static_cast<int>(policies_.size()); }
  int capacity() const { return capacity_; }
  const rl::QPolicy& at(int j) const { return *policies_.at(j); }
  const std::vector<std::shared_ptr<const rl::QPolicy>>& policies() const { return policies_; }

 private:
  int capacity_;
  std::vector<std::shared_ptr<const rl::QPolicy>> policies_;
};

// Selector W and its frozen target W'. The head has one logit per base policy.
class SelectorModel {
 public:
  SelectorModel() = default;
  SelectorModel(int input_dim, std::vector<int> hidden);

  // Adds an output for a new base policy (a zero logit). The first call
  // builds the network from init_rng.
  void grow(RngStream& init_rng);
  void sync_target() { target_ = std::make_shared<const nn::Mlp>(online()); }

  int num_components() const { return online_ ? online_->output_dim() : 0; }
  int target_components() const { return target_ ? target_->output_dim() : 0; }
  nn::Mlp& online();
  const nn::Mlp& online() const;
  const nn::Mlp& target() const;
  bool has_target() const { return target_ != nullptr; }
  std::shared_ptr<const nn::Mlp> online_snapshot() const;
  std::shared_ptr<const nn::Mlp> target_snapshot() const { return target_; }
  void set(nn::Mlp online, std::optional<nn::Mlp> target);

  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }

 private:
  int input_dim_ = 0;
  std::vector<int> hidden_;
  std::shared_ptr<nn::Mlp> online_;
  std::shared_ptr<const nn::Mlp> target_;
};

// W o pi_{1:t}: at each information state samples j ~ W(.|h), then acts
// with pi_j. The selector may be null when there is a single component.
class FpemPolicy : public BehaviorPolicy {
 public:
  FpemPolicy(std::shared_ptr<const nn::Mlp> selector,
             std::vector<std::shared_ptr<const BehaviorPolicy>> components, int num_actions);

  std::vector<double> selector_distribution(const InfoState& info) const;
  // Pointwise mixture sum_j W(j|h) pi_j(.|h).
  std::vector<double> action_distribution(const InfoState& info) const override;
  Decision decide(const InfoState& info, RngStream& rng) const override;
  std::string describe() const override;

  int num_components() const { return static_cast<int>(components_.size()); }
  const std::shared_ptr<const nn::Mlp>& selector() const { return selector_; }
  const std::vector<std::shared_ptr<const BehaviorPolicy>>& components() const { return components_; }
  int num_actions() const { return num_actions_; }

 private:
  std::shared_ptr<const nn::Mlp> selector_;
  std::vector<std::shared_ptr<const BehaviorPolicy>> components_;
  int num_actions_;
};

// Plays inner and reports component = index on every decision.
class LabeledPolicy : public BehaviorPolicy {
 public:
  LabeledPolicy(std::shared_ptr<const BehaviorPolicy> inner, int index)
      : inner_(std::move(inner)), index_(index) {}
  std::vector<double> action_distribution(const InfoState& info) const override {
    return inner_->action_distribution(info);
  }
  Decision decide(const InfoState& info, RngStream& rng) const override;
  std::string describe() const override { return inner_->describe(); }

 private:
  std::shared_ptr<const BehaviorPolicy> inner_;
  int index_;
};

// Uniform opponent pool; samples a uniform-random policy while empty.
class OpponentPool {
 public:
  explicit OpponentPool(int num_actions) : fallback_(std::make_shared<UniformRandomPolicy>(num_actions)) {}

  void add(std::shared_ptr<const BehaviorPolicy> policy) { policies_.push_back(std::move(policy)); }
  int size() const { return static_cast<int>(policies_.size()); }
  const std::vector<std::shared_ptr<const BehaviorPolicy>>& policies() const { return policies_; }
  std::shared_ptr<const BehaviorPolicy> sample(RngStream& rng) const;

 private:
  std::shared_ptr<const BehaviorPolicy> fallback_;
  std::vector<std::shared_ptr<const BehaviorPolicy>> policies_;
};

enum class Role { kMax, kMin };

// Opponent for one training episode. Max-player training draws from the
// pool; min-player training faces the newest base policy with probability
// 1/t and W' o pi_{1:t-1} otherwise. Labels are zero-based base-policy
// indices carried in Decision::component.
std::shared_ptr<const BehaviorPolicy> sample_training_opponent(
    Role role, int t, const OpponentPool& pool, const std::shared_ptr<const FpemPolicy>& previous,
    const std::shared_ptr<const BehaviorPolicy>& newest, RngStream& rng);

struct SelectorTrainConfig {
  int epochs = 20;
  int batch_size = 128;
  nn::OptimizerConfig optimizer;
};

// Mean softmax cross-entropy of W on the examples. Throws
// std::invalid_argument on out-of-range labels.
double selector_cross_entropy(const nn::Mlp& selector, const std::vector<SelectorExample>& data);
// Minibatch training on shuffled examples with a fresh optimizer; returns
// the final cross-entropy over all examples.
double train_selector(nn::Mlp& selector, const std::vector<SelectorExample>& data,
                      const SelectorTrainConfig& config, RngStream& rng);

enum class ReservoirScope { kIteration, kRun };

struct FpemConfig {
  int iterations = 10;  // T, also the base-policy capacity
  rl::SolverConfig max_solver;
  rl::SolverConfig min_solver;
  std::vector<int> selector_hidden = {64};
  SelectorTrainConfig selector_training;
  std::int64_t reservoir_capacity = 50000;
  double holdout_fraction = 0.1;
  ReservoirScope reservoir_scope = ReservoirScope::kIteration;
  // Episodes of DQN against a uniform-random opponent whose weights warm
  // start every new base policy; 0 disables pre-training.
  std::int64_t pretrain_episodes = 0;

  void validate() const;
};

struct IterationReport {
  int iteration = 0;             // 1-based
  std::int64_t episodes = 0;     // cumulative, both phases
  std::int64_t max_episodes = 0; // this iteration
  std::int64_t min_episodes = 0;
  double selector_loss = 0.0;    // training cross-entropy
  double heldout_loss = 0.0;     // NaN without held-out data
  std::int64_t heldout_size = 0;
  int components = 0;
};

struct FpemState {
  int iteration = 0;  // completed iterations
  std::int64_t episodes = 0;
  BasePolicySet base_policies{0};
  SelectorModel selector;
  std::vector<std::shared_ptr<const rl::QPolicy>> pool_policies;  // min player's OP
  Reservoir<SelectorExample> memory{1};
  Reservoir<SelectorExample> heldout{1};
  std::array<std::shared_ptr<const nn::Mlp>, 2> pretrained;  // per seat, may be null
  std::vector<IterationReport> reports;

  // W o pi_{1:t} for the max player with the current W.
  std::shared_ptr<const FpemPolicy> policy(int num_actions) const;
  OpponentPool opponent_pool(int num_actions) const;
};

FpemState initial_state(const Environment& game, const FpemConfig& config);

using IterationCallback = std::function<void(const FpemState&, const IterationReport&)>;

// Alternating FPEM. Iteration t uses streams derived from (seed, t), so a
// run resumed from a completed-iteration state continues identically.
FpemState run_fpem(const Environment& game, const FpemConfig& config, std::uint64_t seed,
                   const IterationCallback& on_iteration = {},
                   std::optional<FpemState> resume = std::nullopt);

// Simultaneous variant: within an iteration the two learners alternate
// episodes, each facing the other's current exploring policy (off-policy).
// Each side gets its solver's max_episodes, so totals match run_fpem.
FpemState run_fpem_v1(const Environment& game, const FpemConfig& config, std::uint64_t seed,
                      const IterationCallback& on_iteration = {},
                      std::optional<FpemState> resume = std::nullopt);

// Checkpoint directory of a completed iteration: state.txt plus
// base_<j>.ckpt, pool_<j>.ckpt, selector.ckpt and selector_target.ckpt in
// the shared network format, and reservoir files when the scope is kRun.
void save_state(const FpemState& state, const FpemConfig& config, const std::string& dir);
FpemState load_state(const Environment& game, const FpemConfig& config, const std::string& dir);

}  // namespace fpem::core

#endif  // FPEM_FPEM_H_
