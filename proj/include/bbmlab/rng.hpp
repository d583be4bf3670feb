// Copyright 2026 The bbmlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BBMLAB_RNG_HPP_
#define BBMLAB_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace bbmlab {

// SplitMix64 finalizer. Used to derive stream keys, never as a generator on
// its own.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(parent ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A pure function of (key, counter); no state is carried between blocks.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit constexpr Philox4x32(std::uint64_t key) noexcept
      : k0_(static_cast<std::uint32_t>(key)), k1_(static_cast<std::uint32_t>(key >> 32)) {}

  constexpr Block operator()(Block ctr) const noexcept {
    std::uint32_t k0 = k0_;
    std::uint32_t k1 = k1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0, static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1, static_cast<std::uint32_t>(p0)};
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  std::uint32_t k0_;
  std::uint32_t k1_;
};

// A random stream addressed by (seed, stream id). Two streams with different
// ids are independent regardless of the order in which they are consumed,
// which is what makes tree construction independent of traversal order.
//
// Satisfies UniformRandomBitGenerator so it can drive <random> distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : philox_(mix64(seed)), id_(stream_id) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t hi = next32();
    return (hi << 32) | next32();
  }

  std::uint32_t next32() noexcept {
    if (used_ == 4) refill();
    return buffer_[used_++];
  }

  // Uniform on the open interval (0, 1) with 32-bit resolution; one counter
  // block serves four draws.
  double uniform() noexcept { return (static_cast<double>(next32()) + 0.5) * 0x1.0p-32; }

  double exponential(double rate = 1.0) noexcept { return -std::log(uniform()) / rate; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  void refill() noexcept {
    buffer_ = philox_({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                       static_cast<std::uint32_t>(id_), static_cast<std::uint32_t>(id_ >> 32)});
    ++counter_;
    used_ = 0;
  }

  Philox4x32 philox_;
  std::uint64_t id_;
  std::uint64_t counter_ = 0;
  Philox4x32::Block buffer_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bbmlab

#endif  // BBMLAB_RNG_HPP_
