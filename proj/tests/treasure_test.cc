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

#include "fpem/treasure.h"

#include <queue>
#include <set>

#include "fpem/errors.h"
#include "fpem/rollout.h"
#include "gtest/gtest.h"

namespace fpem::treasure {
namespace {

// Breadth-first connectivity check written independently of the engine.
bool bfs_connected(const GridMap& m) {
  std::vector<int> open;
  for (int i = 0; i < m.size * m.size; ++i)
    if (!m.walls[i]) open.push_back(i);
  if (open.empty()) return false;
  std::vector<int> dist(m.size * m.size, -1);
  std::queue<int> q;
  q.push(open[0]);
  dist[open[0]] = 0;
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    const int r = i / m.size, c = i % m.size;
    const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (nr < 0 || nc < 0 || nr >= m.size || nc >= m.size) continue;
      const int j = nr * m.size + nc;
      if (m.walls[j] || dist[j] >= 0) continue;
      dist[j] = dist[i] + 1;
      q.push(j);
    }
  }
  for (int i : open)
    if (dist[i] < 0) return false;
  return true;
}

GridMap open_map(Cell a, Cell b, std::vector<Cell> treasures) {
  GridMap m;
  m.size = 8;
  m.walls.assign(64, 0);
  m.treasures.assign(64, 0);
  m.players = {a, b};
  for (Cell t : treasures) m.treasures[m.index(t)] = 1;
  return m;
}

TEST(GenerateMapTest, OpenBoardPlacesDistinctObjects) {
  TreasureConfig cfg;
  cfg.obstacle_density = 0.0;
  RngStream rng(1, 0);
  const GridMap m = generate_map(rng, cfg);
  EXPECT_EQ(std::count(m.walls.begin(), m.walls.end(), 1), 0);
  EXPECT_EQ(m.treasures_on_board(), 4);
  EXPECT_FALSE(m.players[0] == m.players[1]);
  for (const Cell& p : m.players) EXPECT_FALSE(m.treasure(p));
}

TEST(GenerateMapTest, FixedSeedGivesIdenticalMap) {
  TreasureConfig cfg;
  RngStream a(42, 0), b(42, 0);
  EXPECT_EQ(dump_map(generate_map(a, cfg)), dump_map(generate_map(b, cfg)));
}

TEST(GenerateMapTest, TenThousandMapsAreConnected) {
  TreasureConfig cfg;
  cfg.obstacle_density = 0.3;
  RngStream rng(7, 0);
  for (int i = 0; i < 10000; ++i) {
    const GridMap m = generate_map(rng, cfg);
    ASSERT_TRUE(bfs_connected(m)) << dump_map(m);
    ASSERT_TRUE(m.valid());
    ASSERT_EQ(m.treasures_on_board(), cfg.n_treasures);
  }
}

TEST(GenerateMapTest, InfeasibleDensityIsAConfigError) {
  TreasureConfig cfg;
  cfg.obstacle_density = 0.95;
  RngStream rng(0, 0);
  EXPECT_THROW(generate_map(rng, cfg), ConfigError);
  cfg.obstacle_density = 0.6;
  cfg.max_generation_attempts = 3;
  // Dense boards are almost never connected; bounded retries give up.
  EXPECT_THROW(
      {
        for (int i = 0; i < 20; ++i) generate_map(rng, cfg);
      },
      ConfigError);
}

TEST(ObserveTest, InteriorPlayerSeesThirteenCells) {
  const GridMap m = open_map({4, 4}, {0, 7}, {{1, 1}});
  EXPECT_EQ(visible_cells(m, 0).size(), 13u);
}

TEST(ObserveTest, CornerPlayerSeesSixCells) {
  const GridMap m = open_map({0, 0}, {7, 7}, {{5, 5}});
  const auto cells = visible_cells(m, 0);
  std::set<std::pair<int, int>> got;
  for (const Cell& c : cells) got.insert({c.row, c.col});
  const std::set<std::pair<int, int>> want{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {2, 0}};
  EXPECT_EQ(got, want);
  // The out-of-bounds channel marks the 7 clipped cells.
  const auto f = observe_frame(m, 0, TreasureConfig{});
  int oob = 0;
  for (int k = 0; k < kFovCells; ++k) oob += static_cast<int>(f[k * kChannels + 3]);
  EXPECT_EQ(oob, 7);
}

TEST(ObserveTest, OpponentOutsideViewLeavesChannelEmpty) {
  GridMap m = open_map({4, 4}, {0, 0}, {{7, 7}});
  m.carried = {0, 3};
  const auto f = observe_frame(m, 0, TreasureConfig{});
  for (int k = 0; k < kFovCells; ++k) EXPECT_EQ(f[k * kChannels + 2], 0.0);
  EXPECT_EQ(f[kFovCells * kChannels + 3], 0.0);
  m.players[1] = {4, 5};
  const auto g = observe_frame(m, 0, TreasureConfig{});
  double opp = 0.0;
  for (int k = 0; k < kFovCells; ++k) opp += g[k * kChannels + 2];
  EXPECT_EQ(opp, 1.0);
  EXPECT_GT(g[kFovCells * kChannels + 3], 0.0);
}

TEST(ObserveTest, FrameStackIsZeroPaddedAndShifts) {
  FrameHistory h(3);
  h.push(std::vector<double>(kFrameDim, 1.0), "a");
  auto s = h.stacked(kFrameDim);
  ASSERT_EQ(s.size(), static_cast<std::size_t>(3 * kFrameDim));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[2 * kFrameDim], 1.0);
  h.push(std::vector<double>(kFrameDim, 2.0), "b");
  h.push(std::vector<double>(kFrameDim, 3.0), "c");
  h.push(std::vector<double>(kFrameDim, 4.0), "d");
  s = h.stacked(kFrameDim);
  EXPECT_EQ(s[0], 2.0);
  EXPECT_EQ(s[2 * kFrameDim], 4.0);
  EXPECT_EQ(h.key(), "b|c|d");
}

TEST(StepTest, FirstPickupIsWorthOne) {
  GridMap m = open_map({2, 2}, {6, 6}, {{2, 3}, {0, 7}});
  const StepResult r = step(m, {kRight, kUp}, TreasureConfig{});
  EXPECT_EQ(r.rewards, (RewardPair{1.0, -1.0}));
  EXPECT_EQ(m.carried[0], 1);
  EXPECT_FALSE(m.treasure({2, 3}));
}

TEST(StepTest, LaterPickupsAreWorthTwo) {
  GridMap m = open_map({2, 2}, {6, 6}, {{2, 3}, {0, 7}});
  m.carried = {0, 1};
  const StepResult r = step(m, {kUp, kLeft}, TreasureConfig{});
  EXPECT_EQ(r.rewards, (RewardPair{0.0, 0.0}));
  m.treasures[m.index({6, 4})] = 1;
  const StepResult r2 = step(m, {kUp, kLeft}, TreasureConfig{});
  EXPECT_EQ(r2.rewards, (RewardPair{-2.0, 2.0}));
  EXPECT_EQ(m.carried[1], 2);
}

TEST(StepTest, SimultaneousPickupCancelsTheTreasure) {
  GridMap m = open_map({3, 2}, {3, 4}, {{3, 3}, {7, 7}});
  const StepResult r = step(m, {kRight, kLeft}, TreasureConfig{});
  EXPECT_EQ(r.rewards, (RewardPair{0.0, 0.0}));
  EXPECT_FALSE(m.treasure({3, 3}));
  EXPECT_EQ(m.carried, (std::array<int, 2>{0, 0}));
  EXPECT_EQ(m.cancelled, 1);
}

TEST(StepTest, GrabTransfersOneTreasure) {
  GridMap m = open_map({3, 2}, {3, 3}, {{7, 7}});
  m.carried = {2, 0};
  // The opponent is blocked by a wall and the carrier walks in.
  m.walls[m.index({2, 3})] = 1;
  const StepResult r = step(m, {kRight, kUp}, TreasureConfig{});
  EXPECT_EQ(m.players[0], m.players[1]);
  EXPECT_EQ(r.rewards, (RewardPair{-2.0, 2.0}));
  EXPECT_EQ(m.carried, (std::array<int, 2>{1, 1}));
  // Staying co-located does not re-trigger the grab.
  m.walls[m.index({4, 3})] = 1;
  m.walls[m.index({3, 4})] = 1;
  const StepResult again = step(m, {kUp, kDown}, TreasureConfig{});
  EXPECT_EQ(again.rewards, (RewardPair{0.0, 0.0}));
}

TEST(StepTest, GrabFiresWhenTheOpponentEntersAStationaryCarrier) {
  GridMap m = open_map({0, 0}, {0, 1}, {{7, 7}});
  m.carried = {1, 0};
  const StepResult r = step(m, {kUp, kLeft}, TreasureConfig{});
  EXPECT_EQ(m.players[0], m.players[1]);
  EXPECT_EQ(r.rewards, (RewardPair{-2.0, 2.0}));
}

TEST(StepTest, WallsAndEdgesBlockMoves) {
  GridMap m = open_map({0, 0}, {5, 5}, {{7, 7}});
  m.walls[m.index({5, 6})] = 1;
  step(m, {kUp, kRight}, TreasureConfig{});
  EXPECT_EQ(m.players[0], (Cell{0, 0}));
  EXPECT_EQ(m.players[1], (Cell{5, 5}));
}

TEST(StepTest, TerminalStateRejectsSteps) {
  GridMap m = open_map({0, 0}, {5, 5}, {{0, 1}});
  const StepResult r = step(m, {kRight, kUp}, TreasureConfig{});
  EXPECT_TRUE(r.done);
  EXPECT_THROW(step(m, {kRight, kUp}, TreasureConfig{}), ContractError);
  GridMap t = open_map({0, 0}, {5, 5}, {{7, 7}});
  t.tick = 100;
  EXPECT_THROW(step(t, {kRight, kUp}, TreasureConfig{}), ContractError);
}

TEST(MapTextTest, DumpLoadRoundTrip) {
  RngStream rng(3, 0);
  GridMap m = generate_map(rng, TreasureConfig{});
  m.carried = {1, 2};
  m.tick = 17;
  const GridMap back = load_map(dump_map(m));
  EXPECT_EQ(dump_map(back), dump_map(m));
  EXPECT_EQ(back.carried, m.carried);
  EXPECT_THROW(load_map("nonsense"), FormatError);
}

TEST(TreasureGameTest, RandomEpisodesKeepInvariants) {
  TreasureConfig cfg;
  TreasureGame game(cfg);
  UniformRandomPolicy uniform(kNumActions);
  RngStream rng(5, 0);
  int capped = 0;
  for (int e = 0; e < 300; ++e) {
    game.reset(rng);
    const int initial = game.map().treasures_on_board();
    int steps = 0;
    while (!game.is_terminal()) {
      const std::array<Action, 2> joint{static_cast<Action>(rng.uniform_int(4)),
                                        static_cast<Action>(rng.uniform_int(4))};
      const int before = game.map().treasures_on_board();
      const RewardPair r = game.apply(joint);
      EXPECT_EQ(r[0] + r[1], 0.0);
      const GridMap& m = game.map();
      EXPECT_LE(m.treasures_on_board(), before);
      EXPECT_EQ(m.treasures_on_board() + m.carried[0] + m.carried[1] + m.cancelled, initial);
      ++steps;
    }
    EXPECT_LE(steps, cfg.max_ticks);
    capped += steps == cfg.max_ticks;
  }
  EXPECT_GT(capped, 0);
  const InfoState info = game.info_state(0);
  EXPECT_EQ(static_cast<int>(info.features.size()), cfg.observation_dim());
}

TEST(TreasureGameTest, IdenticalPoliciesGiveNearZeroMeanReturn) {
  TreasureGame game;
  UniformRandomPolicy uniform(kNumActions);
  const RngStream rng(13, 0);
  const RolloutBatch b = rollout_batch(game, uniform, uniform, 400, rng);
  EXPECT_EQ(b.stats.wins + b.stats.losses + b.stats.ties, 400);
  EXPECT_NEAR(b.stats.mean_return, 0.0, 3.0 * b.stats.stderr_return + 1e-12);
  for (const Trajectory& t : b.trajectories) {
    const bool tie = t.episode_return[0] == 0.0 && t.episode_return[1] == 0.0;
    EXPECT_EQ(t.winner == Outcome::kTie, tie);
  }
}

}  // namespace
}  // namespace fpem::treasure
