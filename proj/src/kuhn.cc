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

#include "fpem/kuhn.h"

#include <stdexcept>

#include "fpem/errors.h"

namespace fpem::kuhn {
namespace {

constexpr const char* kDecisionHistories[2][2] = {{"", "pb"}, {"p", "b"}};

Player actor_of(const std::string& history) {
  return static_cast<Player>(history.size() % 2);
}

char action_char(Action a) { return a == kBet ? 'b' : 'p'; }

const std::vector<double>& lookup(const PolicyTable& table, Player player, int card,
                                  const std::string& history) {
  const std::string key = info_key(player, card, history);
  auto it = table.find(key);
  if (it == table.end()) throw CoverageError(key);
  if (it->second.size() != static_cast<std::size_t>(kNumActions))
    throw CoverageError(key + " (row has wrong length)");
  return it->second;
}

double ev_recursive(const PolicyTable& p1, const PolicyTable& p2, int c1, int c2,
                    const std::string& h, double reach) {
  if (is_terminal_history(h)) return terminal_payoff(c1, c2, h);
  if (reach == 0.0) return 0.0;
  const Player actor = actor_of(h);
  const std::vector<double>& probs =
      actor == kMaxPlayer ? lookup(p1, kMaxPlayer, c1, h) : lookup(p2, kMinPlayer, c2, h);
  double v = 0.0;
  for (Action a = 0; a < kNumActions; ++a) {
    if (probs[a] == 0.0) continue;
    v += probs[a] * ev_recursive(p1, p2, c1, c2, h + action_char(a), reach * probs[a]);
  }
  return v;
}

using CardValues = std::array<double, kNumCards>;

// Responder-perspective values per opponent card under the best response
// being built into out.
CardValues br_recursive(const PolicyTable& opponent, Player responder, int card,
                        const std::string& h, const CardValues& opp_reach, PolicyTable& out) {
  CardValues v{0.0, 0.0, 0.0};
  if (is_terminal_history(h)) {
    for (int o = 0; o < kNumCards; ++o) {
      if (o == card) continue;
      v[o] = responder == kMaxPlayer ? terminal_payoff(card, o, h) : -terminal_payoff(o, card, h);
    }
    return v;
  }
  const Player actor = actor_of(h);
  if (actor == responder) {
    CardValues child[kNumActions];
    double score[kNumActions];
    for (Action a = 0; a < kNumActions; ++a) {
      child[a] = br_recursive(opponent, responder, card, h + action_char(a), opp_reach, out);
      score[a] = 0.0;
      for (int o = 0; o < kNumCards; ++o) {
        if (o != card) score[a] += opp_reach[o] * child[a][o];
      }
    }
    const Action best = score[kBet] > score[kPass] ? kBet : kPass;
    std::vector<double> row(kNumActions, 0.0);
    row[best] = 1.0;
    out[info_key(responder, card, h)] = row;
    return child[best];
  }
  CardValues next_reach[kNumActions];
  CardValues probs[kNumActions];
  for (int o = 0; o < kNumCards; ++o) {
    for (Action a = 0; a < kNumActions; ++a) {
      probs[a][o] = 0.0;
      next_reach[a][o] = 0.0;
    }
    if (o == card || opp_reach[o] == 0.0) continue;
    const std::vector<double>& row = lookup(opponent, actor, o, h);
    for (Action a = 0; a < kNumActions; ++a) {
      probs[a][o] = row[a];
      next_reach[a][o] = opp_reach[o] * row[a];
    }
  }
  for (Action a = 0; a < kNumActions; ++a) {
    const CardValues child =
        br_recursive(opponent, responder, card, h + action_char(a), next_reach[a], out);
    for (int o = 0; o < kNumCards; ++o) v[o] += probs[a][o] * child[o];
  }
  return v;
}

}  // namespace

char card_name(int card) {
  static constexpr char kNames[] = {'J', 'Q', 'K'};
  if (card < 0 || card >= kNumCards) throw std::out_of_range("kuhn card");
  return kNames[card];
}

std::string info_key(Player player, int card, const std::string& history) {
  std::string key;
  key += static_cast<char>('0' + player);
  key += ':';
  key += card_name(card);
  key += ':';
  key += history;
  return key;
}

InfoState make_info_state(Player player, int card, const std::string& history) {
  InfoState info;
  info.player = player;
  info.key = info_key(player, card, history);
  info.features.assign(kObservationDim, 0.0);
  info.features[player] = 1.0;
  info.features[2 + card] = 1.0;
  for (std::size_t i = 0; i < history.size() && i < 3; ++i) {
    info.features[5 + 2 * i + (history[i] == 'b' ? 1 : 0)] = 1.0;
  }
  info.legal_actions = {kPass, kBet};
  return info;
}

std::vector<InfoState> info_states(Player player) {
  std::vector<InfoState> out;
  for (int card = 0; card < kNumCards; ++card) {
    for (const char* h : kDecisionHistories[player]) out.push_back(make_info_state(player, card, h));
  }
  return out;
}

std::vector<InfoState> all_info_states() {
  std::vector<InfoState> out = info_states(kMaxPlayer);
  for (InfoState& s : info_states(kMinPlayer)) out.push_back(std::move(s));
  return out;
}

bool is_terminal_history(const std::string& h) {
  return h == "pp" || h == "bb" || h == "bp" || h == "pbb" || h == "pbp";
}

double terminal_payoff(int card_1, int card_2, const std::string& h) {
  const double sign = card_1 > card_2 ? 1.0 : -1.0;
  if (h == "pp") return sign;
  if (h == "bb" || h == "pbb") return 2.0 * sign;
  if (h == "bp") return 1.0;
  if (h == "pbp") return -1.0;
  throw ContractError("kuhn: not a terminal history '" + h + "'");
}

KuhnGame::KuhnGame() {
  spec_.name = "kuhn";
  spec_.num_actions = {kNumActions, kNumActions};
  spec_.max_episode_length = 3;
  spec_.observation_dim = kObservationDim;
  spec_.zero_sum = true;
  spec_.symmetric = false;
}

void KuhnGame::reset(RngStream& rng) {
  const int deal = static_cast<int>(rng.uniform_int(kNumDeals));
  const int first = deal / 2;
  int second = deal % 2;
  if (second >= first) ++second;
  set_deal(first, second);
}

void KuhnGame::set_deal(int card_1, int card_2) {
  if (card_1 == card_2 || card_1 < 0 || card_2 < 0 || card_1 >= kNumCards || card_2 >= kNumCards)
    throw ContractError("kuhn: deal must be two distinct cards");
  cards_ = {card_1, card_2};
  history_.clear();
}

bool KuhnGame::is_terminal() const { return is_terminal_history(history_); }

std::vector<Player> KuhnGame::acting_players() const {
  if (is_terminal()) return {};
  return {actor_of(history_)};
}

InfoState KuhnGame::info_state(Player player) const {
  return make_info_state(player, cards_[player], history_);
}

RewardPair KuhnGame::apply(std::span<const Action> actions) {
  if (is_terminal()) throw ContractError("kuhn: apply on terminal state");
  if (actions.size() != 1) throw ContractError("kuhn: exactly one action per step");
  const Action a = actions[0];
  if (a != kPass && a != kBet) throw ContractError("kuhn: illegal action");
  history_ += action_char(a);
  if (!is_terminal()) return {0.0, 0.0};
  const double r = terminal_payoff(cards_[0], cards_[1], history_);
  return {r, -r};
}

std::unique_ptr<Environment> KuhnGame::clone() const { return std::make_unique<KuhnGame>(*this); }

PolicyTable tabulate(const BehaviorPolicy& policy, Player player) {
  PolicyTable table;
  for (const InfoState& info : info_states(player)) table[info.key] = policy.action_distribution(info);
  return table;
}

PolicyTable tabulate(const BehaviorPolicy& policy_1, const BehaviorPolicy& policy_2) {
  PolicyTable table = tabulate(policy_1, kMaxPlayer);
  table.merge(tabulate(policy_2, kMinPlayer));
  return table;
}

double expected_value(const PolicyTable& policy_1, const PolicyTable& policy_2) {
  double total = 0.0;
  for (int c1 = 0; c1 < kNumCards; ++c1) {
    for (int c2 = 0; c2 < kNumCards; ++c2) {
      if (c1 == c2) continue;
      total += ev_recursive(policy_1, policy_2, c1, c2, "", 1.0);
    }
  }
  return total / kNumDeals;
}

BestResponse exact_best_response(const PolicyTable& opponent, Player responder) {
  BestResponse br;
  for (int card = 0; card < kNumCards; ++card) {
    CardValues reach{1.0, 1.0, 1.0};
    reach[card] = 0.0;
    const CardValues v = br_recursive(opponent, responder, card, "", reach, br.policy);
    for (int o = 0; o < kNumCards; ++o) {
      if (o != card) br.value += v[o] / kNumDeals;
    }
  }
  return br;
}

double nash_conv(const PolicyTable& policy_1, const PolicyTable& policy_2) {
  return exact_best_response(policy_2, kMaxPlayer).value +
         exact_best_response(policy_1, kMinPlayer).value;
}

std::vector<PolicyTable> pure_strategies(Player player) {
  const std::vector<InfoState> infos = info_states(player);
  std::vector<PolicyTable> out;
  const int n = static_cast<int>(infos.size());
  for (int mask = 0; mask < (1 << n); ++mask) {
    PolicyTable t;
    for (int i = 0; i < n; ++i) {
      const Action a = (mask >> i) & 1;
      std::vector<double> row(kNumActions, 0.0);
      row[a] = 1.0;
      t[infos[i].key] = row;
    }
    out.push_back(std::move(t));
  }
  return out;
}

double own_reach(const PolicyTable& table, const InfoState& info) {
  // The key encodes player, card and history.
  const Player player = info.key[0] - '0';
  const int card = info.key[2] == 'J' ? 0 : (info.key[2] == 'Q' ? 1 : 2);
  const std::string history = info.key.substr(4);
  double reach = 1.0;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const std::string prefix = history.substr(0, k);
    if (actor_of(prefix) != player) continue;
    const Action a = history[k] == 'b' ? kBet : kPass;
    reach *= lookup(table, player, card, prefix)[a];
  }
  return reach;
}

std::vector<double> posterior_weights(std::span<const PolicyTable> components,
                                      const InfoState& info, std::span<const double> prior) {
  const std::size_t n = components.size();
  if (n == 0) throw ContractError("posterior_weights: no components");
  if (!prior.empty() && prior.size() != n) throw ContractError("posterior_weights: prior size");
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double pj = prior.empty() ? 1.0 / static_cast<double>(n) : prior[j];
    w[j] = pj * own_reach(components[j], info);
    total += w[j];
  }
  if (total > 0.0) {
    for (double& x : w) x /= total;
    return w;
  }
  double prior_total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = prior.empty() ? 1.0 : prior[j];
    prior_total += w[j];
  }
  for (double& x : w) x /= prior_total;
  return w;
}

PolicyTable mixture_to_behavior(std::span<const PolicyTable> components, Player player,
                                std::span<const double> prior) {
  PolicyTable out;
  for (const InfoState& info : info_states(player)) {
    const std::vector<double> w = posterior_weights(components, info, prior);
    std::vector<double> row(kNumActions, 0.0);
    for (std::size_t j = 0; j < components.size(); ++j) {
      if (w[j] == 0.0) continue;
      auto it = components[j].find(info.key);
      if (it == components[j].end()) throw CoverageError(info.key);
      const std::vector<double>& pj = it->second;
      for (int a = 0; a < kNumActions; ++a) row[a] += w[j] * pj[a];
    }
    out[info.key] = row;
  }
  return out;
}

}  // namespace fpem::kuhn
