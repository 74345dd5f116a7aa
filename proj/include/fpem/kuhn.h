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

#ifndef FPEM_KUHN_H_
#define FPEM_KUHN_H_

#include <array>
#include <span>
#include <string>
#include <vector>

#include "fpem/game.h"

// Two-player Kuhn poker with exact evaluation.
//
// Cards J < Q < K, one dealt to each player; both ante 1 chip. Action 0 is
// pass (check, or fold when facing a bet), action 1 is bet (bet, or call when
// facing a bet). Player 1 acts first; a single bet of 1 chip is allowed.
// Terminal histories: pp (showdown for 1), bb and pbb (showdown for 2),
// bp (player 2 folds), pbp (player 1 folds). Payoffs are in chips, [-2, 2].
namespace fpem::kuhn {

inline constexpr Action kPass = 0;
inline constexpr Action kBet = 1;
inline constexpr int kNumCards = 3;
inline constexpr int kNumActions = 2;
inline constexpr int kObservationDim = 11;
inline constexpr int kNumDeals = 6;

char card_name(int card);

// Information-state key "<player>:<card>:<history>", e.g. "0:K:pb".
std::string info_key(Player player, int card, const std::string& history);
InfoState make_info_state(Player player, int card, const std::string& history);

// The 6 decision histories of each player, with the card held.
std::vector<InfoState> info_states(Player player);
// All 12 information states, player 1 first.
std::vector<InfoState> all_info_states();

bool is_terminal_history(const std::string& history);
// Player-1 chips at a terminal history.
double terminal_payoff(int card_1, int card_2, const std::string& history);

class KuhnGame final : public Environment {
 public:
  KuhnGame();

  const GameSpec& spec() const override { return spec_; }
  void reset(RngStream& rng) override;
  bool is_terminal() const override;
  std::vector<Player> acting_players() const override;
  InfoState info_state(Player player) const override;
  RewardPair apply(std::span<const Action> actions) override;
  int ticks() const override { return static_cast<int>(history_.size()); }
  std::unique_ptr<Environment> clone() const override;

  // Direct setup, for tests.
  void set_deal(int card_1, int card_2);
  const std::string& history() const { return history_; }
  std::array<int, 2> deal() const { return cards_; }

 private:
  GameSpec spec_;
  std::array<int, 2> cards_{0, 1};
  std::string history_;
};

// Tabulates a behavior policy on the 6 information states of player.
PolicyTable tabulate(const BehaviorPolicy& policy, Player player);
// Both seats into one table (12 rows).
PolicyTable tabulate(const BehaviorPolicy& policy_1, const BehaviorPolicy& policy_2);

// Exact expected chips of player 1. Tables may contain rows of both players;
// only the relevant seat's rows are read. Throws CoverageError.
double expected_value(const PolicyTable& policy_1, const PolicyTable& policy_2);

struct BestResponse {
  PolicyTable policy;  // pure, rows for the responder only
  double value = 0.0;  // responder's expected chips
};

// Backward induction over the responder's information states with the
// opponent's reach probabilities per private card.
BestResponse exact_best_response(const PolicyTable& opponent, Player responder);

// BR value of player 1 plus BR value of player 2; nonnegative.
double nash_conv(const PolicyTable& policy_1, const PolicyTable& policy_2);

// All 64 deterministic strategies of a player.
std::vector<PolicyTable> pure_strategies(Player player);

// Probability that player's own actions reach the information state under table.
double own_reach(const PolicyTable& table, const InfoState& info);

// Reach-posterior weights over component policies at an information state:
// W*(j | h) proportional to prior_j * own_reach_j(h). An empty prior means uniform.
// Falls back to the prior when no component reaches h.
std::vector<double> posterior_weights(std::span<const PolicyTable> components,
                                      const InfoState& info, std::span<const double> prior = {});

// Behavior strategy equivalent to the mixed strategy that picks component j
// with probability prior_j for the whole game.
PolicyTable mixture_to_behavior(std::span<const PolicyTable> components, Player player,
                                std::span<const double> prior = {});

}  // namespace fpem::kuhn

#endif  // FPEM_KUHN_H_
