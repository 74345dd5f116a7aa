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

#ifndef FPEM_TREASURE_H_
#define FPEM_TREASURE_H_

#include <array>
#include <deque>
#include <string>
#include <vector>

#include "fpem/game.h"

// Partially observable two-player treasure hunting on a square grid.
//
// Both players move simultaneously with {UP, DOWN, LEFT, RIGHT}; moves into a
// wall or off the board leave the player in place. A tick resolves in order:
// moves, wall blocks, grabs, pickups.
//   * pickup: a player alone on a treasure cell takes it, +1 for the first
//     treasure it carries and +2 for every later one (opponent gets the negation);
//   * both players on the same treasure cell: the treasure is destroyed, 0/0;
//   * grab: when the players become co-located and exactly one carries, the
//     carrier loses one treasure to the other, -2 for the carrier.
// The episode ends when no treasure is left on the board or at max_ticks.
namespace fpem::treasure {

enum Direction : Action { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;
inline constexpr int kFovCells = 13;
inline constexpr int kChannels = 4;  // wall, treasure, opponent, out of bounds
inline constexpr int kFrameDim = kFovCells * kChannels + 5;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct TreasureConfig {
  int size = 8;
  double obstacle_density = 0.15;
  int n_treasures = 4;
  int max_ticks = 100;
  int frame_stack = 4;
  int max_generation_attempts = 1000;

  void validate() const;
  int observation_dim() const { return frame_stack * kFrameDim; }
};

struct GridMap {
  int size = 8;
  std::vector<char> walls;      // row-major, size*size
  std::vector<char> treasures;  // row-major, size*size
  std::array<Cell, 2> players{};
  std::array<int, 2> carried{0, 0};
  int tick = 0;
  int cancelled = 0;  // treasures destroyed by simultaneous pickup

  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < size && c.col < size; }
  int index(Cell c) const { return c.row * size + c.col; }
  bool wall(Cell c) const { return walls[index(c)] != 0; }
  bool treasure(Cell c) const { return treasures[index(c)] != 0; }
  int treasures_on_board() const;
  // Checks in-bounds placement, no overlap with walls, and connectivity of
  // all non-wall cells.
  bool valid() const;
};

// True iff all non-wall cells form one 4-connected component.
bool empty_cells_connected(const GridMap& map);

// ConfigError if the density leaves fewer than n_treasures + 2 empty cells or
// no connected layout is found within max_generation_attempts.
GridMap generate_map(RngStream& rng, const TreasureConfig& config);

// Diamond |dr| + |dc| <= 2 around the center, row-major order; 13 offsets.
const std::array<Cell, kFovCells>& fov_offsets();
// In-bounds cells of the field of view of player.
std::vector<Cell> visible_cells(const GridMap& map, Player player);

// One frame: per cell (wall, treasure, opponent, out of bounds), then own
// position (normalized), own carried, the opponent's carried count when the
// opponent is visible, and elapsed time; counts are divided by n_treasures.
std::vector<double> observe_frame(const GridMap& map, Player player, const TreasureConfig& config);
// Compact text form of a frame, used in information-state keys.
std::string frame_key(const GridMap& map, Player player);

// The last K frames of one player, newest last, zero-padded at episode start.
class FrameHistory {
 public:
  explicit FrameHistory(int depth = 4) : depth_(depth) {}
  void clear();
  void push(std::vector<double> frame, std::string key);
  std::vector<double> stacked(int frame_dim) const;
  std::string key() const;
  int depth() const { return depth_; }

 private:
  int depth_;
  std::deque<std::vector<double>> frames_;
  std::deque<std::string> keys_;
};

struct TreasureObservation {
  std::vector<Cell> fov_cells;
  std::vector<double> frame;
  std::vector<double> features;  // stacked frames
};

TreasureObservation observe(const GridMap& map, Player player, const FrameHistory& history,
                            const TreasureConfig& config);

struct StepResult {
  RewardPair rewards{0.0, 0.0};
  bool done = false;
  int pickups = 0;
  int grabs = 0;
};

Cell move_target(const GridMap& map, Cell from, Action a);
bool is_done(const GridMap& map, const TreasureConfig& config);
// ContractError when called on a terminal map.
StepResult step(GridMap& map, const std::array<Action, 2>& joint, const TreasureConfig& config);

// Text form: a header "treasure <size> tick=<t> carried=<a>,<b> cancelled=<c>"
// then one row per line with '#' wall, '.' empty, '*' treasure, 'A' player 1,
// 'B' player 2, 'X' both players.
std::string dump_map(const GridMap& map);
GridMap load_map(const std::string& text);

class TreasureGame final : public Environment {
 public:
  explicit TreasureGame(TreasureConfig config = {});

  const GameSpec& spec() const override { return spec_; }
  void reset(RngStream& rng) override;
  bool is_terminal() const override { return done_; }
  std::vector<Player> acting_players() const override;
  InfoState info_state(Player player) const override;
  RewardPair apply(std::span<const Action> actions) override;
  int ticks() const override { return map_.tick; }
  std::unique_ptr<Environment> clone() const override;

  // Starts from a given map instead of a generated one.
  void reset_to(const GridMap& map);
  const GridMap& map() const { return map_; }
  const TreasureConfig& config() const { return config_; }

 private:
  void record_frames();

  TreasureConfig config_;
  GameSpec spec_;
  GridMap map_;
  std::array<FrameHistory, 2> history_;
  bool done_ = true;
};

}  // namespace fpem::treasure

#endif  // FPEM_TREASURE_H_
