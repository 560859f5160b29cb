// Copyright 2026 The contq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace contq {

/// Identifies one independent random stream below a master seed.
struct StreamId {
  std::uint64_t replication = 0;
  std::uint64_t episode = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream keyed by (master seed, replication, episode).
///
/// Draw i of a stream is mix64(key + (i + 1) * golden), i.e. SplitMix64 started
/// at a key that is itself a hash of the stream coordinates. Two streams with
/// the same coordinates replay the same sequence; distinct coordinates give
/// unrelated keys. Satisfies UniformRandomBitGenerator so it composes with
/// <random> distributions.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, StreamId id)
      : seed_(master_seed), id_(id), key_(derive_key(master_seed, id)) {}

  /// A stream whose Gaussian draws are all exactly zero. Used to force
  /// deterministic dynamics in tests.
  static RngStream zero_noise() {
    RngStream s(0, {});
    s.zero_ = true;
    return s;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Standard normal draw (0 for a zero-noise stream).
  double normal() {
    if (zero_) return 0.0;
    return normal_(*this);
  }

  /// Uniform draw on [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(*this);
  }

  bool is_zero_noise() const { return zero_; }
  std::uint64_t master_seed() const { return seed_; }
  StreamId stream_id() const { return id_; }
  std::uint64_t draws() const { return counter_; }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, StreamId id) {
    std::uint64_t k = detail::mix64(seed + detail::kGolden);
    k = detail::mix64(k ^ (id.replication + 0x632BE59BD9B4E019ULL));
    k = detail::mix64(k ^ (id.episode + 0x85157AF5ULL * detail::kGolden));
    return k;
  }

  std::uint64_t seed_;
  StreamId id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool zero_ = false;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace contq
