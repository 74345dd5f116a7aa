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

#ifndef FPEM_TESTS_TEST_UTIL_H_
#define FPEM_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <array>
#include <cmath>
#include <boost/math/distributions/chi_squared.hpp>
#include <vector>

#include "fpem/fpem.h"
#include "fpem/game.h"
#include "fpem/kuhn.h"
#include "fpem/nn.h"
#include "fpem/rng.h"

namespace fpem::testing {

// Random Kuhn behavior strategy for one seat; with probability pure_rate a
// row is deterministic.
inline PolicyTable random_kuhn_table(Player player, RngStream& rng, double pure_rate = 0.0) {
  PolicyTable t;
  for (const InfoState& info : kuhn::info_states(player)) {
    double p = rng.uniform();
    if (rng.uniform() < pure_rate) p = p < 0.5 ? 0.0 : 1.0;
    t[info.key] = {1.0 - p, p};
  }
  return t;
}

inline PolicyTable uniform_kuhn_table(Player player) {
  PolicyTable t;
  for (const InfoState& info : kuhn::info_states(player)) t[info.key] = {0.5, 0.5};
  return t;
}

// Kuhn equilibrium with alpha = 1/3, derived offline with a sequence-form LP
// (tests/oracles/kuhn_oracle.py); game value -1/18. Rows are {pass, bet}.
inline PolicyTable kuhn_equilibrium_p1() {
  return {
      {"0:J:", {2.0 / 3.0, 1.0 / 3.0}}, {"0:Q:", {1.0, 0.0}}, {"0:K:", {0.0, 1.0}},
      {"0:J:pb", {1.0, 0.0}},           {"0:Q:pb", {1.0 / 3.0, 2.0 / 3.0}},
      {"0:K:pb", {0.0, 1.0}},
  };
}

// Player-1 strategy returned by the LP solver itself (alpha = 0).
inline PolicyTable kuhn_lp_p1() {
  return {
      {"0:J:", {1.0, 0.0}},   {"0:Q:", {1.0, 0.0}},             {"0:K:", {1.0, 0.0}},
      {"0:J:pb", {1.0, 0.0}}, {"0:Q:pb", {2.0 / 3.0, 1.0 / 3.0}}, {"0:K:pb", {0.0, 1.0}},
  };
}

inline PolicyTable kuhn_equilibrium_p2() {
  return {
      {"1:J:p", {2.0 / 3.0, 1.0 / 3.0}}, {"1:Q:p", {1.0, 0.0}}, {"1:K:p", {0.0, 1.0}},
      {"1:J:b", {1.0, 0.0}},             {"1:Q:b", {2.0 / 3.0, 1.0 / 3.0}},
      {"1:K:b", {0.0, 1.0}},
  };
}

// Frozen oracle values (exact rationals from the offline enumeration).
inline constexpr double kUniformValue = 1.0 / 8.0;
inline constexpr double kUniformBr1 = 1.0 / 2.0;
inline constexpr double kUniformBr2 = 5.0 / 12.0;
inline constexpr double kUniformNashConv = 11.0 / 12.0;
inline constexpr double kGameValue = -1.0 / 18.0;

// Both players' exact values by walking the engine itself (apply() rewards),
// independent of kuhn::expected_value.
inline std::array<double, 2> engine_tree_values(const PolicyTable& p1, const PolicyTable& p2) {
  std::array<double, 2> total{0.0, 0.0};
  struct Walker {
    const PolicyTable& p1;
    const PolicyTable& p2;
    std::array<double, 2>& total;
    void walk(const kuhn::KuhnGame& g, double prob) {
      if (g.is_terminal() || prob == 0.0) return;
      const Player actor = g.acting_players().front();
      const InfoState info = g.info_state(actor);
      const std::vector<double>& row = (actor == 0 ? p1 : p2).at(info.key);
      for (Action a = 0; a < 2; ++a) {
        kuhn::KuhnGame child = g;
        const std::array<Action, 1> act{a};
        const RewardPair r = child.apply(act);
        total[0] += prob * row[a] * r[0];
        total[1] += prob * row[a] * r[1];
        walk(child, prob * row[a]);
      }
    }
  } walker{p1, p2, total};
  for (int c1 = 0; c1 < 3; ++c1) {
    for (int c2 = 0; c2 < 3; ++c2) {
      if (c1 == c2) continue;
      kuhn::KuhnGame g;
      g.set_deal(c1, c2);
      walker.walk(g, 1.0 / 6.0);
    }
  }
  return total;
}

// Streams n ids into a k-reservoir per trial and tests the retained set for
// uniformity: ids fall in 100 equal bins, chi-square with 99 degrees of
// freedom. Returns the number of trials with p <= alpha.
inline int reservoir_chi_square_failures(int trials, std::size_t k, std::size_t n, double alpha,
                                         std::uint64_t seed) {
  constexpr std::size_t kBins = 100;
  const boost::math::chi_squared dist(kBins - 1);
  const double expected = static_cast<double>(k) / kBins;
  int failures = 0;
  for (int trial = 0; trial < trials; ++trial) {
    RngStream rng(seed, static_cast<std::uint64_t>(trial));
    core::Reservoir<std::size_t> r(k);
    for (std::size_t i = 0; i < n; ++i) r.insert(i, rng);
    std::array<double, kBins> counts{};
    for (std::size_t id : r.items()) counts[id * kBins / n] += 1.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    if (boost::math::cdf(boost::math::complement(dist, chi2)) <= alpha) ++failures;
  }
  return failures;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = 2.0 * rng.uniform() - 1.0;
  return m;
}

inline nn::Mlp random_mlp(const std::vector<int>& sizes, RngStream& rng) {
  nn::Mlp net(sizes, rng);
  // Nonzero biases so the gradient check covers them.
  for (nn::DenseLayer& l : net.layers()) l.bias = random_matrix(l.bias.size(), 1, rng).col(0) * 0.3;
  return net;
}

inline nn::LossTarget random_target(int kind, int outputs, int batch, RngStream& rng) {
  if (kind == 0) {
    nn::CrossEntropyTarget t;
    for (int i = 0; i < batch; ++i) t.labels.push_back(static_cast<int>(rng.uniform_int(outputs)));
    return t;
  }
  if (kind == 1) {
    nn::SelectedSquaredErrorTarget t;
    for (int i = 0; i < batch; ++i) {
      t.actions.push_back(static_cast<int>(rng.uniform_int(outputs)));
      t.targets.push_back(4.0 * rng.uniform() - 2.0);
    }
    return t;
  }
  return nn::SquaredErrorTarget{random_matrix(outputs, batch, rng)};
}

// Central differences, step 1e-5, against every parameter.
inline double max_relative_error(const nn::Mlp& net, const Eigen::MatrixXd& x, const nn::LossTarget& target) {
  const nn::LossAndGradient analytic = nn::backward(net, x, target);
  const double h = 1e-5;
  double worst = 0.0;
  nn::Mlp probe = net;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = nn::loss_value(probe, x, target);
    param = saved - h;
    const double down = nn::loss_value(probe, x, target);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - grad) / std::max(1e-6, std::abs(numeric) + std::abs(grad));
    worst = std::max(worst, err);
  };
  for (std::size_t l = 0; l < probe.num_layers(); ++l) {
    nn::DenseLayer& layer = probe.layers()[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        check(layer.weight(r, c), analytic.gradients[l].weight(r, c));
      check(layer.bias(r), analytic.gradients[l].bias(r));
    }
  }
  return worst;
}

// Worst relative gradient error over random networks, batches and losses.
inline double worst_gradient_error(int instances, std::uint64_t seed) {
  RngStream rng(seed, 0);
  double worst = 0.0;
  for (int trial = 0; trial < instances; ++trial) {
    const int depth = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> sizes;
    for (int l = 0; l <= depth; ++l) sizes.push_back(1 + static_cast<int>(rng.uniform_int(16)));
    const nn::Mlp net = random_mlp(sizes, rng);
    const int batch = 1 + static_cast<int>(rng.uniform_int(5));
    const Eigen::MatrixXd x = random_matrix(sizes.front(), batch, rng);
    const nn::LossTarget target = random_target(trial % 3, sizes.back(), batch, rng);
    worst = std::max(worst, max_relative_error(net, x, target));
  }
  return worst;
}

}  // namespace fpem::testing

#endif  // FPEM_TESTS_TEST_UTIL_H_
