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

#ifndef FPEM_RNG_H_
#define FPEM_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>

namespace fpem {

// SplitMix64 finalizer, used to decorrelate (seed, stream) pairs.
std::uint64_t mix64(std::uint64_t x);

// A reproducible random stream identified by (seed, stream_id). Two streams
// built from the same pair produce identical draw sequences; streams with
// different ids are statistically independent for all practical purposes.
//
// Draws are computed from raw 64-bit engine output rather than through the
// std:: distributions, whose algorithms are implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  // Child stream addressed by a path of indices, e.g. {iteration, phase, episode}.
  static RngStream derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);
  RngStream child(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). Requires n > 0.
  std::size_t uniform_int(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Index drawn from an unnormalized nonnegative weight vector.
  std::size_t sample_discrete(std::span<const double> weights);

  // Engine state as text, for run snapshots.
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

}  // namespace fpem

#endif  // FPEM_RNG_H_
