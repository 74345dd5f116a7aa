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

#include "fpem/rng.h"

#include <sstream>
#include <stdexcept>

namespace fpem {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(mix64(mix64(seed) ^ (stream_id * 0xd1b54a32d192ed03ULL + 1))) {}

RngStream RngStream::derive(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) {
  std::uint64_t id = 0x51ed270b27a8e0c1ULL;
  for (std::uint64_t p : path) id = mix64(id ^ mix64(p + 0x2545f4914f6cdd1dULL));
  return RngStream(seed, id);
}

RngStream RngStream::child(std::uint64_t index) const {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::uniform_int(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t RngStream::sample_discrete(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("sample_discrete: no positive weight");
  const double r = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

std::string RngStream::state() const {
  std::ostringstream out;
  out << seed_ << ' ' << stream_id_ << ' ' << engine_;
  return out.str();
}

void RngStream::restore(const std::string& state) {
  std::istringstream in(state);
  in >> seed_ >> stream_id_ >> engine_;
  if (!in) throw std::runtime_error("corrupt rng state");
}

}  // namespace fpem
