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

#include "fpem/rollout.h"

#include <cmath>
#include <exception>
#include <memory>

#include "fpem/errors.h"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fpem {

void RolloutStats::add(const Trajectory& t) {
  ++episodes;
  switch (t.winner) {
    case Outcome::kPlayer1: ++wins; break;
    case Outcome::kPlayer2: ++losses; break;
    case Outcome::kTie: ++ties; break;
  }
  sum_ += t.episode_return[0];
  sum_sq_ += t.episode_return[0] * t.episode_return[0];
}

void RolloutStats::merge(const RolloutStats& o) {
  episodes += o.episodes;
  wins += o.wins;
  losses += o.losses;
  ties += o.ties;
  sum_ += o.sum_;
  sum_sq_ += o.sum_sq_;
}

void RolloutStats::finalize() {
  if (episodes == 0) return;
  const double n = static_cast<double>(episodes);
  mean_return = sum_ / n;
  const double var = episodes > 1 ? std::max(0.0, (sum_sq_ - n * mean_return * mean_return) / (n - 1)) : 0.0;
  stderr_return = std::sqrt(var / n);
}

int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_worker_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

std::vector<Trajectory> collect_episodes_serial(const Environment& game, std::int64_t first,
                                                std::int64_t count, const RngStream& rng,
                                                const EpisodeJob& job) {
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  std::unique_ptr<Environment> env = game.clone();
  for (std::int64_t k = 0; k < count; ++k) {
    RngStream episode_rng = rng.child(static_cast<std::uint64_t>(first + k));
    out[k] = job(first + k, *env, episode_rng);
  }
  return out;
}

std::vector<Trajectory> collect_episodes(const Environment& game, std::int64_t first,
                                         std::int64_t count, const RngStream& rng,
                                         const EpisodeJob& job) {
#ifdef _OPENMP
  if (count < 2 || omp_get_max_threads() == 1 || omp_in_parallel())
    return collect_episodes_serial(game, first, count, rng, job);
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  std::exception_ptr failure;
#pragma omp parallel
  {
    std::unique_ptr<Environment> env = game.clone();
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t k = 0; k < count; ++k) {
      try {
        RngStream episode_rng = rng.child(static_cast<std::uint64_t>(first + k));
        out[k] = job(first + k, *env, episode_rng);
      } catch (...) {
#pragma omp critical(fpem_collect_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
#else
  return collect_episodes_serial(game, first, count, rng, job);
#endif
}

namespace {

RolloutBatch finish(std::vector<Trajectory> trajectories, bool keep) {
  RolloutBatch batch;
  for (const Trajectory& t : trajectories) batch.stats.add(t);
  batch.stats.finalize();
  if (keep) batch.trajectories = std::move(trajectories);
  return batch;
}

void check_count(std::int64_t n) {
  if (n < 1) throw ContractError("rollout_batch: n_episodes must be >= 1");
}

}  // namespace

RolloutBatch rollout_batch_serial(const Environment& game, const BehaviorPolicy& policy_1,
                                  const BehaviorPolicy& policy_2, std::int64_t n_episodes,
                                  const RngStream& rng, bool keep_trajectories) {
  check_count(n_episodes);
  if (!keep_trajectories) {
    RolloutBatch batch;
    std::unique_ptr<Environment> env = game.clone();
    for (std::int64_t k = 0; k < n_episodes; ++k) {
      RngStream episode_rng = rng.child(static_cast<std::uint64_t>(k));
      batch.stats.add(play_episode(*env, policy_1, policy_2, episode_rng));
    }
    batch.stats.finalize();
    return batch;
  }
  auto job = [&](std::int64_t, Environment& env, RngStream& r) {
    return play_episode(env, policy_1, policy_2, r);
  };
  return finish(collect_episodes_serial(game, 0, n_episodes, rng, job), true);
}

RolloutBatch rollout_batch(const Environment& game, const BehaviorPolicy& policy_1,
                           const BehaviorPolicy& policy_2, std::int64_t n_episodes,
                           const RngStream& rng, bool keep_trajectories) {
  check_count(n_episodes);
  if (keep_trajectories) {
    auto job = [&](std::int64_t, Environment& env, RngStream& r) {
      return play_episode(env, policy_1, policy_2, r);
    };
    return finish(collect_episodes(game, 0, n_episodes, rng, job), true);
  }
#ifdef _OPENMP
  if (omp_get_max_threads() == 1 || omp_in_parallel())
    return rollout_batch_serial(game, policy_1, policy_2, n_episodes, rng, false);
  // Stats-only path: per-thread partial sums merged in thread order.
  const int nt = omp_get_max_threads();
  std::vector<RolloutStats> partial(nt);
  std::exception_ptr failure;
#pragma omp parallel num_threads(nt)
  {
    const int tid = omp_get_thread_num();
    std::unique_ptr<Environment> env = game.clone();
#pragma omp for schedule(static)
    for (std::int64_t k = 0; k < n_episodes; ++k) {
      try {
        RngStream episode_rng = rng.child(static_cast<std::uint64_t>(k));
        partial[tid].add(play_episode(*env, policy_1, policy_2, episode_rng));
      } catch (...) {
#pragma omp critical(fpem_rollout_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  RolloutBatch batch;
  for (const RolloutStats& s : partial) batch.stats.merge(s);
  batch.stats.finalize();
  return batch;
#else
  return rollout_batch_serial(game, policy_1, policy_2, n_episodes, rng, false);
#endif
}

}  // namespace fpem
