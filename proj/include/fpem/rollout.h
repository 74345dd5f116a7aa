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

#ifndef FPEM_ROLLOUT_H_
#define FPEM_ROLLOUT_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "fpem/game.h"

namespace fpem {

struct RolloutStats {
  std::int64_t episodes = 0;
  std::int64_t wins = 0;    // player 1 wins
  std::int64_t losses = 0;  // player 1 losses
  std::int64_t ties = 0;
  double mean_return = 0.0; // player 1
  double stderr_return = 0.0;

  void add(const Trajectory& t);
  // Combines per-worker partial sums; call finalize() once at the end.
  void merge(const RolloutStats& other);
  void finalize();

 private:
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  RolloutStats stats;
};

// Episode k is played with rng.child(k), so results do not depend on how
// episodes are distributed over workers.
RolloutBatch rollout_batch(const Environment& game, const BehaviorPolicy& policy_1,
                           const BehaviorPolicy& policy_2, std::int64_t n_episodes,
                           const RngStream& rng, bool keep_trajectories = true);

// Single-threaded reference for rollout_batch; same results bit for bit.
RolloutBatch rollout_batch_serial(const Environment& game, const BehaviorPolicy& policy_1,
                                  const BehaviorPolicy& policy_2, std::int64_t n_episodes,
                                  const RngStream& rng, bool keep_trajectories = true);

// Generic parallel episode kernel: runs job(k, env, rng.child(k)) for
// k in [first, first + count) on per-thread engine replicas and returns the
// trajectories in index order.
using EpisodeJob = std::function<Trajectory(std::int64_t, Environment&, RngStream&)>;
std::vector<Trajectory> collect_episodes(const Environment& game, std::int64_t first,
                                         std::int64_t count, const RngStream& rng,
                                         const EpisodeJob& job);
std::vector<Trajectory> collect_episodes_serial(const Environment& game, std::int64_t first,
                                                std::int64_t count, const RngStream& rng,
                                                const EpisodeJob& job);

// Number of OpenMP workers used by the parallel kernels (1 without OpenMP).
int worker_count();
void set_worker_count(int n);

}  // namespace fpem

#endif  // FPEM_ROLLOUT_H_
