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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fpem/errors.h"

namespace fpem::treasure {

void TreasureConfig::validate() const {
  if (size < 3) throw ConfigError("treasure.size", "must be >= 3");
  if (!(obstacle_density >= 0.0 && obstacle_density < 1.0))
    throw ConfigError("treasure.obstacle_density", "must be in [0, 1)");
  if (n_treasures < 1) throw ConfigError("treasure.n_treasures", "must be >= 1");
  if (max_ticks < 1) throw ConfigError("treasure.max_ticks", "must be >= 1");
  if (frame_stack < 1) throw ConfigError("treasure.frame_stack", "must be >= 1");
  if (max_generation_attempts < 1)
    throw ConfigError("treasure.max_generation_attempts", "must be >= 1");
}

int GridMap::treasures_on_board() const {
  return static_cast<int>(std::count(treasures.begin(), treasures.end(), 1));
}

bool empty_cells_connected(const GridMap& map) {
  const int n = map.size * map.size;
  std::vector<char> seen(n, 0);
  int start = -1, empties = 0;
  for (int i = 0; i < n; ++i) {
    if (!map.walls[i]) {
      ++empties;
      if (start < 0) start = i;
    }
  }
  if (empties == 0) return false;
  std::vector<int> stack{start};
  seen[start] = 1;
  int reached = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    ++reached;
    const Cell c{i / map.size, i % map.size};
    const Cell nbrs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (const Cell& nb : nbrs) {
      if (!map.in_bounds(nb) || map.wall(nb)) continue;
      const int j = map.index(nb);
      if (!seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return reached == empties;
}

bool GridMap::valid() const {
  const int n = size * size;
  if (static_cast<int>(walls.size()) != n || static_cast<int>(treasures.size()) != n) return false;
  for (int i = 0; i < n; ++i) {
    if (walls[i] && treasures[i]) return false;
  }
  for (const Cell& p : players) {
    if (!in_bounds(p) || wall(p)) return false;
  }
  return empty_cells_connected(*this);
}

GridMap generate_map(RngStream& rng, const TreasureConfig& config) {
  config.validate();
  const int n = config.size * config.size;
  const int n_walls = static_cast<int>(std::lround(config.obstacle_density * n));
  if (n - n_walls < config.n_treasures + 2)
    throw ConfigError("treasure.obstacle_density",
                      "too dense: fewer than n_treasures + 2 empty cells");
  std::vector<int> cells(n);
  for (int attempt = 0; attempt < config.max_generation_attempts; ++attempt) {
    std::iota(cells.begin(), cells.end(), 0);
    // Partial Fisher-Yates: the first n_walls cells become walls.
    for (int i = 0; i < n_walls; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(n - i)));
      std::swap(cells[i], cells[j]);
    }
    GridMap map;
    map.size = config.size;
    map.walls.assign(n, 0);
    map.treasures.assign(n, 0);
    for (int i = 0; i < n_walls; ++i) map.walls[cells[i]] = 1;
    if (!empty_cells_connected(map)) continue;
    std::vector<int> empty(cells.begin() + n_walls, cells.end());
    const int needed = config.n_treasures + 2;
    for (int i = 0; i < needed; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(empty.size() - i));
      std::swap(empty[i], empty[j]);
    }
    map.players[0] = {empty[0] / config.size, empty[0] % config.size};
    map.players[1] = {empty[1] / config.size, empty[1] % config.size};
    for (int i = 2; i < needed; ++i) map.treasures[empty[i]] = 1;
    return map;
  }
  throw ConfigError("treasure.obstacle_density",
                    "no connected map found within max_generation_attempts");
}

const std::array<Cell, kFovCells>& fov_offsets() {
  static const std::array<Cell, kFovCells> kOffsets = [] {
    std::array<Cell, kFovCells> out{};
    int k = 0;
    for (int dr = -2; dr <= 2; ++dr) {
      const int w = 2 - std::abs(dr);
      for (int dc = -w; dc <= w; ++dc) out[k++] = {dr, dc};
    }
    return out;
  }();
  return kOffsets;
}

std::vector<Cell> visible_cells(const GridMap& map, Player player) {
  std::vector<Cell> out;
  const Cell me = map.players[player];
  for (const Cell& d : fov_offsets()) {
    const Cell c{me.row + d.row, me.col + d.col};
    if (map.in_bounds(c)) out.push_back(c);
  }
  return out;
}

namespace {

bool opponent_visible(const GridMap& map, Player player) {
  const Cell me = map.players[player], opp = map.players[opponent_of(player)];
  return std::abs(me.row - opp.row) + std::abs(me.col - opp.col) <= 2;
}

}  // namespace

std::vector<double> observe_frame(const GridMap& map, Player player, const TreasureConfig& config) {
  std::vector<double> f(kFrameDim, 0.0);
  const Cell me = map.players[player];
  const Cell opp = map.players[opponent_of(player)];
  const auto& offsets = fov_offsets();
  for (int k = 0; k < kFovCells; ++k) {
    const Cell c{me.row + offsets[k].row, me.col + offsets[k].col};
    double* cell = &f[k * kChannels];
    if (!map.in_bounds(c)) {
      cell[3] = 1.0;
      continue;
    }
    cell[0] = map.wall(c) ? 1.0 : 0.0;
    cell[1] = map.treasure(c) ? 1.0 : 0.0;
    cell[2] = c == opp ? 1.0 : 0.0;
  }
  const double scale = map.size > 1 ? 1.0 / (map.size - 1) : 1.0;
  const double per_treasure = 1.0 / config.n_treasures;
  double* tail = &f[kFovCells * kChannels];
  tail[0] = me.row * scale;
  tail[1] = me.col * scale;
  tail[2] = map.carried[player] * per_treasure;
  tail[3] = opponent_visible(map, player) ? map.carried[opponent_of(player)] * per_treasure : 0.0;
  tail[4] = static_cast<double>(map.tick) / config.max_ticks;
  return f;
}

std::string frame_key(const GridMap& map, Player player) {
  std::string key;
  const Cell me = map.players[player];
  const Cell opp = map.players[opponent_of(player)];
  for (const Cell& d : fov_offsets()) {
    const Cell c{me.row + d.row, me.col + d.col};
    char ch = '.';
    if (!map.in_bounds(c)) ch = 'x';
    else if (map.wall(c)) ch = '#';
    else if (c == opp) ch = 'o';
    else if (map.treasure(c)) ch = '*';
    key += ch;
  }
  std::ostringstream s;
  s << ',' << me.row << ',' << me.col << ',' << map.carried[player] << ','
    << (opponent_visible(map, player) ? map.carried[opponent_of(player)] : 0) << ',' << map.tick;
  return key + s.str();
}

void FrameHistory::clear() {
  frames_.clear();
  keys_.clear();
}

void FrameHistory::push(std::vector<double> frame, std::string key) {
  frames_.push_back(std::move(frame));
  keys_.push_back(std::move(key));
  while (static_cast<int>(frames_.size()) > depth_) {
    frames_.pop_front();
    keys_.pop_front();
  }
}

std::vector<double> FrameHistory::stacked(int frame_dim) const {
  std::vector<double> out(static_cast<std::size_t>(depth_) * frame_dim, 0.0);
  const int offset = depth_ - static_cast<int>(frames_.size());
  for (std::size_t i = 0; i < frames_.size(); ++i)
    std::copy(frames_[i].begin(), frames_[i].end(), out.begin() + (offset + i) * frame_dim);
  return out;
}

std::string FrameHistory::key() const {
  std::string out;
  for (const std::string& k : keys_) {
    if (!out.empty()) out += '|';
    out += k;
  }
  return out;
}

TreasureObservation observe(const GridMap& map, Player player, const FrameHistory& history,
                            const TreasureConfig& config) {
  TreasureObservation obs;
  obs.fov_cells = visible_cells(map, player);
  obs.frame = observe_frame(map, player, config);
  obs.features = history.stacked(kFrameDim);
  return obs;
}

Cell move_target(const GridMap& map, Cell from, Action a) {
  Cell to = from;
  switch (a) {
    case kUp: --to.row; break;
    case kDown: ++to.row; break;
    case kLeft: --to.col; break;
    case kRight: ++to.col; break;
    default: throw ContractError("treasure: illegal action " + std::to_string(a));
  }
  if (!map.in_bounds(to) || map.wall(to)) return from;
  return to;
}

bool is_done(const GridMap& map, const TreasureConfig& config) {
  return map.tick >= config.max_ticks || map.treasures_on_board() == 0;
}

StepResult step(GridMap& map, const std::array<Action, 2>& joint, const TreasureConfig& config) {
  if (is_done(map, config)) throw ContractError("treasure: step on a terminal state");
  StepResult result;
  const std::array<Cell, 2> before = map.players;
  for (Player p = 0; p < 2; ++p) map.players[p] = move_target(map, before[p], joint[p]);
  ++map.tick;

  const bool together = map.players[0] == map.players[1];
  if (together && !(before[0] == before[1])) {
    for (Player carrier = 0; carrier < 2; ++carrier) {
      const Player other = opponent_of(carrier);
      if (map.carried[carrier] > 0 && map.carried[other] == 0) {
        --map.carried[carrier];
        ++map.carried[other];
        result.rewards[carrier] -= 2.0;
        result.rewards[other] += 2.0;
        ++result.grabs;
        break;
      }
    }
  }

  if (together && map.treasure(map.players[0])) {
    map.treasures[map.index(map.players[0])] = 0;
    ++map.cancelled;
  } else {
    for (Player p = 0; p < 2; ++p) {
      const Cell c = map.players[p];
      if (!map.treasure(c)) continue;
      map.treasures[map.index(c)] = 0;
      const double gain = map.carried[p] == 0 ? 1.0 : 2.0;
      ++map.carried[p];
      result.rewards[p] += gain;
      result.rewards[opponent_of(p)] -= gain;
      ++result.pickups;
    }
  }
  result.done = is_done(map, config);
  return result;
}

std::string dump_map(const GridMap& map) {
  std::ostringstream s;
  s << "treasure " << map.size << " tick=" << map.tick << " carried=" << map.carried[0] << ','
    << map.carried[1] << " cancelled=" << map.cancelled << '\n';
  for (int r = 0; r < map.size; ++r) {
    for (int c = 0; c < map.size; ++c) {
      const Cell cell{r, c};
      const bool a = map.players[0] == cell, b = map.players[1] == cell;
      char ch = '.';
      if (a && b) ch = 'X';
      else if (a) ch = 'A';
      else if (b) ch = 'B';
      else if (map.wall(cell)) ch = '#';
      else if (map.treasure(cell)) ch = '*';
      s << ch;
    }
    s << '\n';
  }
  return s.str();
}

GridMap load_map(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("treasure map: empty input");
  GridMap map;
  int a = 0, b = 0;
  if (std::sscanf(header.c_str(), "treasure %d tick=%d carried=%d,%d cancelled=%d", &map.size,
                  &map.tick, &a, &b, &map.cancelled) != 5 ||
      map.size < 1)
    throw FormatError("treasure map: bad header '" + header + "'");
  map.carried = {a, b};
  const int n = map.size * map.size;
  map.walls.assign(n, 0);
  map.treasures.assign(n, 0);
  bool seen[2] = {false, false};
  for (int r = 0; r < map.size; ++r) {
    std::string row;
    if (!std::getline(in, row) || static_cast<int>(row.size()) < map.size)
      throw FormatError("treasure map: short row " + std::to_string(r));
    for (int c = 0; c < map.size; ++c) {
      const int i = r * map.size + c;
      switch (row[c]) {
        case '#': map.walls[i] = 1; break;
        case '*': map.treasures[i] = 1; break;
        case 'A': map.players[0] = {r, c}; seen[0] = true; break;
        case 'B': map.players[1] = {r, c}; seen[1] = true; break;
        case 'X':
          map.players[0] = map.players[1] = {r, c};
          seen[0] = seen[1] = true;
          break;
        case '.': break;
        default: throw FormatError(std::string("treasure map: unknown cell '") + row[c] + "'");
      }
    }
  }
  if (!seen[0] || !seen[1]) throw FormatError("treasure map: both players must be placed");
  return map;
}

TreasureGame::TreasureGame(TreasureConfig config) : config_(config) {
  config_.validate();
  spec_.name = "treasure";
  spec_.num_actions = {kNumActions, kNumActions};
  spec_.max_episode_length = config_.max_ticks;
  spec_.observation_dim = config_.observation_dim();
  spec_.zero_sum = true;
  spec_.symmetric = true;
  history_ = {FrameHistory(config_.frame_stack), FrameHistory(config_.frame_stack)};
}

void TreasureGame::record_frames() {
  for (Player p = 0; p < 2; ++p) history_[p].push(observe_frame(map_, p, config_), frame_key(map_, p));
}

void TreasureGame::reset(RngStream& rng) { reset_to(generate_map(rng, config_)); }

void TreasureGame::reset_to(const GridMap& map) {
  if (map.size != config_.size) throw ContractError("treasure: map size differs from config");
  map_ = map;
  for (FrameHistory& h : history_) h.clear();
  record_frames();
  done_ = is_done(map_, config_);
}

std::vector<Player> TreasureGame::acting_players() const {
  if (done_) return {};
  return {kMaxPlayer, kMinPlayer};
}

InfoState TreasureGame::info_state(Player player) const {
  InfoState info;
  info.player = player;
  info.key = std::to_string(player) + '|' + history_[player].key();
  info.features = history_[player].stacked(kFrameDim);
  info.legal_actions = {kUp, kDown, kLeft, kRight};
  return info;
}

RewardPair TreasureGame::apply(std::span<const Action> actions) {
  if (actions.size() != 2) throw ContractError("treasure: need one action per player");
  const StepResult r = step(map_, {actions[0], actions[1]}, config_);
  record_frames();
  done_ = r.done;
  return r.rewards;
}

std::unique_ptr<Environment> TreasureGame::clone() const {
  return std::make_unique<TreasureGame>(*this);
}

}  // namespace fpem::treasure
