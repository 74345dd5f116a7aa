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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "fpem/errors.h"
#include "fpem/kuhn.h"
#include "fpem/rollout.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fpem::core {
namespace {

using testing::random_kuhn_table;

std::shared_ptr<const BehaviorPolicy> tabular(PolicyTable t) {
  return std::make_shared<const TabularPolicy>(std::move(t));
}

// A selector whose head bias alone decides the output.
std::shared_ptr<const nn::Mlp> constant_selector(const std::vector<double>& logits, int input_dim) {
  Eigen::VectorXd b(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) b(i) = logits[i];
  return std::make_shared<const nn::Mlp>(std::vector<nn::DenseLayer>{
      {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(logits.size()), input_dim), b}});
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

FpemConfig small_config(std::int64_t episodes = 400) {
  FpemConfig c;
  c.iterations = 3;
  for (rl::SolverConfig* s : {&c.max_solver, &c.min_solver}) {
    s->max_episodes = episodes;
    s->batch_size = 32;
    s->hidden = {16};
  }
  c.selector_hidden = {16};
  c.selector_training.epochs = 3;
  c.reservoir_capacity = 200;
  return c;
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("fpem_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string sub(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

TEST(ReservoirTest, StoresEverythingBelowCapacity) {
  RngStream rng(1, 0);
  Reservoir<int> r(10);
  for (int i = 0; i < 10; ++i) r.insert(i, rng);
  EXPECT_EQ(r.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(r.items()[i], i);
  r.insert(10, rng);
  EXPECT_EQ(r.size(), 10u);
  EXPECT_EQ(r.seen(), 11u);
}

TEST(ReservoirTest, ReplacementProbabilityIsKOverN) {
  // The 4th item into a k = 2 reservoir survives with probability 1/2.
  int kept = 0;
  const int reps = 40000;
  for (int rep = 0; rep < reps; ++rep) {
    RngStream rng(2, rep);
    Reservoir<int> r(2);
    for (int i = 0; i < 4; ++i) r.insert(i, rng);
    kept += std::count(r.items().begin(), r.items().end(), 3);
  }
  EXPECT_NEAR(static_cast<double>(kept) / reps, 0.5, 3.0 * std::sqrt(0.25 / reps));
}

TEST(ReservoirTest, ChiSquareUniformity) {
  EXPECT_LE(testing::reservoir_chi_square_failures(100, 1000, 100000, 0.01, 3), 5);
}

TEST(FpemPolicyTest, SingleComponentBehavesAsIt) {
  RngStream rng(4, 0);
  const PolicyTable t = random_kuhn_table(kMaxPlayer, rng);
  const FpemPolicy p(nullptr, {tabular(t)}, 2);
  for (const InfoState& info : kuhn::info_states(kMaxPlayer)) {
    EXPECT_EQ(p.action_distribution(info), t.at(info.key));
    RngStream a(5, 0), b(5, 0);
    EXPECT_EQ(p.decide(info, a).action, TabularPolicy(t).decide(info, b).action);
  }
}

TEST(FpemPolicyTest, OneHotSelectorReproducesThatComponent) {
  RngStream rng(6, 0);
  std::vector<std::shared_ptr<const BehaviorPolicy>> comps;
  std::vector<PolicyTable> tables;
  for (int j = 0; j < 5; ++j) {
    tables.push_back(random_kuhn_table(kMaxPlayer, rng));
    comps.push_back(tabular(tables.back()));
  }
  const FpemPolicy p(constant_selector({-800, -800, -800, 800, -800}, 11), comps, 2);
  for (const InfoState& info : kuhn::info_states(kMaxPlayer)) {
    const std::vector<double> d = p.action_distribution(info);
    EXPECT_NEAR(d[0], tables[3].at(info.key)[0], 1e-12);
    EXPECT_NEAR(d[1], tables[3].at(info.key)[1], 1e-12);
    RngStream r(7, 0);
    EXPECT_EQ(p.decide(info, r).component, 3);
  }
}

TEST(FpemPolicyTest, UniformSelectorAveragesComponents) {
  RngStream rng(8, 0);
  const PolicyTable a = random_kuhn_table(kMaxPlayer, rng), b = random_kuhn_table(kMaxPlayer, rng);
  const FpemPolicy p(constant_selector({0.0, 0.0}, 11), {tabular(a), tabular(b)}, 2);
  for (const InfoState& info : kuhn::info_states(kMaxPlayer)) {
    const std::vector<double> d = p.action_distribution(info);
    for (int x = 0; x < 2; ++x)
      EXPECT_NEAR(d[x], 0.5 * (a.at(info.key)[x] + b.at(info.key)[x]), 1e-15) << info.key;
  }
}

TEST(FpemPolicyTest, EmptySetOrWrongHeadIsAContractError) {
  EXPECT_THROW(FpemPolicy(nullptr, {}, 2), ContractError);
  const auto u = std::make_shared<const UniformRandomPolicy>(2);
  EXPECT_THROW(FpemPolicy(nullptr, {u, u}, 2), ContractError);
  EXPECT_THROW(FpemPolicy(constant_selector({0, 0, 0}, 11), {u, u}, 2), ContractError);
}

TEST(FpemPolicyTest, SampledPlayMatchesExactMixtureValue) {
  RngStream rng(9, 0);
  const PolicyTable a = random_kuhn_table(kMaxPlayer, rng), b = random_kuhn_table(kMaxPlayer, rng);
  const PolicyTable opp = random_kuhn_table(kMinPlayer, rng);
  const FpemPolicy p(constant_selector({0.3, -0.4}, 11), {tabular(a), tabular(b)}, 2);
  const double exact = kuhn::expected_value(kuhn::tabulate(p, kMaxPlayer), opp);
  kuhn::KuhnGame game;
  const RolloutBatch batch = rollout_batch(game, p, TabularPolicy(opp), 200000, RngStream(10, 0), false);
  EXPECT_NEAR(batch.stats.mean_return, exact, 4.0 * batch.stats.stderr_return);
}

TEST(OpponentSamplingTest, FirstIterationAlwaysPicksNewest) {
  const OpponentPool pool(2);
  const auto newest = std::make_shared<const UniformRandomPolicy>(2);
  RngStream rng(11, 0);
  for (int i = 0; i < 1000; ++i)
    EXPECT_EQ(sample_training_opponent(Role::kMin, 1, pool, nullptr, newest, rng), newest);
}

TEST(OpponentSamplingTest, NewestWithProbabilityOneOverT) {
  const OpponentPool pool(2);
  const auto newest = std::make_shared<const UniformRandomPolicy>(2);
  const auto u = std::make_shared<const UniformRandomPolicy>(2);
  for (int t : {2, 4, 7}) {
    std::vector<std::shared_ptr<const BehaviorPolicy>> comps(t - 1, u);
    auto previous = std::make_shared<const FpemPolicy>(
        t > 2 ? constant_selector(std::vector<double>(t - 1, 0.0), 11) : nullptr, comps, 2);
    RngStream rng(12, t);
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i)
      hits += sample_training_opponent(Role::kMin, t, pool, previous, newest, rng) == newest;
    const double p = 1.0 / t;
    EXPECT_NEAR(static_cast<double>(hits) / n, p, 3.0 * std::sqrt(p * (1 - p) / n)) << "t=" << t;
  }
}

TEST(OpponentSamplingTest, MaxRoleDrawsUniformlyFromPool) {
  OpponentPool pool(2);
  RngStream rng(13, 0);
  EXPECT_EQ(pool.sample(rng)->describe(), "uniform");
  std::vector<std::shared_ptr<const BehaviorPolicy>> members;
  for (int j = 0; j < 4; ++j) {
    members.push_back(std::make_shared<const FixedActionPolicy>(2, j % 2));
    pool.add(members.back());
  }
  std::vector<int> counts(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_training_opponent(Role::kMax, 3, pool, nullptr, nullptr, rng);
    counts[std::find(members.begin(), members.end(), p) - members.begin()]++;
  }
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(n), 0.25, 3.0 * std::sqrt(0.1875 / n));
}

TEST(SelectorTest, UntrainedZeroHeadOverFourGivesLn4) {
  RngStream rng(14, 0);
  SelectorModel s(11, {16});
  for (int j = 0; j < 4; ++j) s.grow(rng);
  // Only the first unit carries random head weights; zero them to get a uniform W.
  s.online().layers().back().weight.setZero();
  std::vector<SelectorExample> data;
  for (int j = 0; j < 4; ++j) data.push_back({std::vector<float>(11, 0.5f), "h", j});
  EXPECT_NEAR(selector_cross_entropy(s.online(), data), std::log(4.0), 1e-12);
}

TEST(SelectorTest, GrowingKeepsDistributionsValid) {
  RngStream rng(15, 0);
  SelectorModel s(11, {8});
  for (int j = 1; j <= 6; ++j) {
    s.grow(rng);
    EXPECT_EQ(s.num_components(), j);
    for (const InfoState& info : kuhn::info_states(kMaxPlayer)) {
      const Eigen::VectorXd p = nn::softmax(s.online().forward(info.features));
      EXPECT_EQ(p.size(), j);
      EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    }
  }
}

TEST(SelectorTest, SinglePairTrainsToOneHot) {
  RngStream rng(16, 0);
  SelectorModel s(11, {16});
  for (int j = 0; j < 3; ++j) s.grow(rng);
  const InfoState info = kuhn::make_info_state(kMaxPlayer, 1, "pb");
  const std::vector<SelectorExample> data = {
      {std::vector<float>(info.features.begin(), info.features.end()), info.key, 2}};
  SelectorTrainConfig cfg;
  cfg.epochs = 3000;
  cfg.optimizer.learning_rate = 1e-2;
  const double loss = train_selector(s.online(), data, cfg, rng);
  EXPECT_LT(loss, 1e-3);
  EXPECT_GT(nn::softmax(s.online().forward(info.features))(2), 0.999);
}

TEST(SelectorTest, LabelOutOfRangeThrows) {
  RngStream rng(17, 0);
  SelectorModel s(11, {4});
  s.grow(rng);
  s.grow(rng);
  const std::vector<SelectorExample> data = {{std::vector<float>(11, 0.0f), "h", 2}};
  EXPECT_THROW(train_selector(s.online(), data, {}, rng), std::invalid_argument);
  EXPECT_THROW(train_selector(s.online(), {}, {}, rng), ContractError);
}

TEST(SelectorTest, LearnsReachPosteriorAndBeatsUniformOnHeldOut) {
  // Labels drawn from the posterior of three random base policies at
  // states sampled by the uniform mixture; held-out CE must beat ln 3.
  RngStream rng(18, 0);
  std::vector<PolicyTable> bp;
  for (int j = 0; j < 3; ++j) bp.push_back(random_kuhn_table(kMaxPlayer, rng, 0.5));
  std::vector<std::shared_ptr<const BehaviorPolicy>> comps;
  for (const auto& t : bp) comps.push_back(tabular(t));
  std::vector<SelectorExample> train, heldout;
  const auto states = kuhn::info_states(kMaxPlayer);
  for (int i = 0; i < 6000; ++i) {
    const InfoState& info = states[rng.uniform_int(states.size())];
    const std::vector<double> w = kuhn::posterior_weights(bp, info);
    SelectorExample e{std::vector<float>(info.features.begin(), info.features.end()), info.key,
                      static_cast<int>(rng.sample_discrete(w))};
    (i % 10 == 0 ? heldout : train).push_back(e);
  }
  SelectorModel s(11, {32});
  for (int j = 0; j < 3; ++j) s.grow(rng);
  train_selector(s.online(), train, {}, rng);
  EXPECT_LT(selector_cross_entropy(s.online(), heldout), std::log(3.0));
}

TEST(RunFpemTest, SingleIterationIsOneBestResponseAndOnePoolEntry) {
  FpemConfig c = small_config();
  c.iterations = 1;
  kuhn::KuhnGame game;
  int calls = 0;
  const FpemState s = run_fpem(game, c, 1, [&](const FpemState&, const IterationReport& r) {
    ++calls;
    EXPECT_EQ(r.iteration, 1);
    EXPECT_EQ(r.components, 1);
    EXPECT_EQ(r.selector_loss, 0.0);
  });
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(s.base_policies.size(), 1);
  EXPECT_EQ(s.pool_policies.size(), 1u);
  EXPECT_EQ(s.selector.num_components(), 1);
  EXPECT_EQ(s.episodes, 800);
  // The FPEM policy is pi_1 itself.
  const auto p = s.policy(2);
  for (const InfoState& info : kuhn::info_states(kMaxPlayer))
    EXPECT_EQ(p->action_distribution(info), s.base_policies.at(0).action_distribution(info));
}

TEST(RunFpemTest, AccountingAndSelectorDimensions) {
  const FpemConfig c = small_config();
  kuhn::KuhnGame game;
  const FpemState s = run_fpem(game, c, 2, [&](const FpemState& st, const IterationReport& r) {
    EXPECT_EQ(st.selector.num_components(), r.iteration);
    EXPECT_EQ(st.selector.target_components(), r.iteration);
    EXPECT_EQ(st.base_policies.size(), r.iteration);
    EXPECT_EQ(r.episodes, 800 * r.iteration);
    EXPECT_GT(st.memory.size(), 0u);
  });
  EXPECT_EQ(s.reports.size(), 3u);
  EXPECT_THROW(BasePolicySet(0).add(s.base_policies.policies()[0]), ContractError);
}

TEST(RunFpemTest, DeterministicForASeed) {
  const FpemConfig c = small_config();
  kuhn::KuhnGame game;
  const FpemState a = run_fpem(game, c, 3), b = run_fpem(game, c, 3);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(a.base_policies.at(j).net().layers()[0].weight, b.base_policies.at(j).net().layers()[0].weight);
    EXPECT_EQ(a.pool_policies[j]->net().layers()[1].bias, b.pool_policies[j]->net().layers()[1].bias);
  }
  EXPECT_EQ(a.selector.online().layers()[1].weight, b.selector.online().layers()[1].weight);
}

TEST(RunFpemTest, FrozenBasePoliciesKeepTheirBytes) {
  const FpemConfig c = small_config();
  kuhn::KuhnGame game;
  TempDir tmp;
  run_fpem(game, c, 4, [&](const FpemState& st, const IterationReport& r) {
    save_state(st, c, tmp.sub("it" + std::to_string(r.iteration)));
  });
  for (int t = 2; t <= 3; ++t) {
    for (int j = 0; j < t - 1; ++j) {
      const std::string name = "/base_" + std::to_string(j) + ".ckpt";
      EXPECT_EQ(file_bytes(tmp.sub("it" + std::to_string(t - 1)) + name),
                file_bytes(tmp.sub("it" + std::to_string(t)) + name))
          << "base policy " << j << " changed in iteration " << t;
    }
  }
}

TEST(RunFpemTest, ResumeContinuesIdentically) {
  kuhn::KuhnGame game;
  for (ReservoirScope scope : {ReservoirScope::kIteration, ReservoirScope::kRun}) {
    FpemConfig c = small_config();
    c.reservoir_scope = scope;
    TempDir tmp;
    const FpemState straight = run_fpem(game, c, 5, [&](const FpemState& st, const IterationReport& r) {
      if (r.iteration == 2) save_state(st, c, tmp.sub("it2"));
    });
    const FpemState resumed = run_fpem(game, c, 5, {}, load_state(game, c, tmp.sub("it2")));
    ASSERT_EQ(resumed.iteration, 3);
    EXPECT_EQ(resumed.episodes, straight.episodes);
    EXPECT_EQ(resumed.base_policies.at(2).net().layers()[0].weight,
              straight.base_policies.at(2).net().layers()[0].weight);
    EXPECT_EQ(resumed.selector.online().layers()[0].weight, straight.selector.online().layers()[0].weight);
    ASSERT_EQ(resumed.reports.size(), 3u);
    EXPECT_EQ(resumed.reports[2].selector_loss, straight.reports[2].selector_loss);
  }
}

TEST(RunFpemTest, LoadRejectsMissingFiles) {
  kuhn::KuhnGame game;
  TempDir tmp;
  EXPECT_THROW(load_state(game, small_config(), tmp.sub("nothing")), FormatError);
}

TEST(RunFpemV1Test, MatchesAlternatingAccountingAndIsDeterministic) {
  const FpemConfig c = small_config();
  kuhn::KuhnGame game;
  const FpemState alt = run_fpem(game, c, 6);
  const FpemState a = run_fpem_v1(game, c, 6), b = run_fpem_v1(game, c, 6);
  EXPECT_EQ(a.episodes, alt.episodes);
  EXPECT_EQ(a.base_policies.size(), 3);
  EXPECT_EQ(a.pool_policies.size(), 3u);
  EXPECT_EQ(a.selector.online().layers()[0].weight, b.selector.online().layers()[0].weight);
  // Exact zero-sum on the flattened policies.
  std::vector<PolicyTable> pool;
  for (const auto& q : a.pool_policies) pool.push_back(kuhn::tabulate(*q, kMinPlayer));
  const PolicyTable p1 = kuhn::tabulate(*a.policy(2), kMaxPlayer);
  const PolicyTable p2 = kuhn::mixture_to_behavior(pool, kMinPlayer);
  const auto v = testing::engine_tree_values(p1, p2);
  EXPECT_NEAR(v[0] + v[1], 0.0, 1e-12);
}

}  // namespace
}  // namespace fpem::core
