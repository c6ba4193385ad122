//
// Copyright 2026 The sgdlab Authors
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
//

#ifndef SGDLAB_RNG_HPP_
#define SGDLAB_RNG_HPP_

// Counter-based random streams.
//
// Every random draw in the library comes from Philox4x32-10 (Salmon et al.,
// "Parallel random numbers: as easy as 1, 2, 3"). A stream is identified by
// a 64-bit key (the user seed), a 32-bit domain tag and a 32-bit substream
// index. Block b of a stream is
//
//   Philox4x32_10(counter = {lo32(b), hi32(b), domain, substream},
//                 key     = {lo32(seed), hi32(seed)})
//
// and the four output words are consumed in order. Derived quantities:
//
//   u64      = (word[k+1] << 32) | word[k]        (two consecutive words)
//   uniform  = (u64 >> 11) * 2^-53                 in [0, 1)
//   open     = ((u64 >> 11) + 0.5) * 2^-53         in (0, 1)
//   normal   = sqrt(-2 ln open1) * cos(2 pi open2) (one normal per two opens)
//   below(n) = u64 mod n, rejecting u64 < (2^64 mod n)
//
// Nothing here touches std:: distributions, whose outputs are
// implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace sgdlab {

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxBlock Philox4x32_10(PhiloxBlock ctr, PhiloxKey key) {
  constexpr std::uint32_t kMulA = 0xD2511F53;
  constexpr std::uint32_t kMulB = 0xCD9E8D57;
  constexpr std::uint32_t kWeylA = 0x9E3779B9;
  constexpr std::uint32_t kWeylB = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

// Domain tags separating the purposes a seed is used for.
enum class StreamDomain : std::uint32_t {
  kInit = 1,
  kShuffle = 2,
  kNoise = 3,
  kSynthetic = 4,
  kProjection = 5,
  kSplit = 6,
  kUtilityNoise = 7,
  kResample = 8,
  kMonteCarlo = 9,
  kExecutionOrder = 10,
};

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamDomain domain,
               std::uint32_t substream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        domain_(static_cast<std::uint32_t>(domain)),
        substream_(substream) {}

  // A sibling stream with the same key and domain.
  RandomStream Substream(std::uint32_t index) const {
    RandomStream s = *this;
    s.substream_ = index;
    s.block_ = 0;
    s.used_ = 4;
    return s;
  }

  std::uint32_t NextU32() {
    if (used_ == 4) Refill();
    return words_[used_++];
  }

  std::uint64_t NextU64() {
    const std::uint64_t lo = NextU32();
    const std::uint64_t hi = NextU32();
    return (hi << 32) | lo;
  }

  double NextUniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  double NextUniformOpen() {
    return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double NextUniform(double lo, double hi) {
    return lo + (hi - lo) * NextUniform();
  }

  double NextNormal() {
    const double u1 = NextUniformOpen();
    const double u2 = NextUniformOpen();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t NextBelow(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = NextU64();
      if (r >= threshold) return r % n;
    }
  }

  // Fisher-Yates, last index first.
  template <typename T>
  void Shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = NextBelow(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  void Refill() {
    words_ = Philox4x32_10(
        {static_cast<std::uint32_t>(block_),
         static_cast<std::uint32_t>(block_ >> 32), domain_, substream_},
        key_);
    ++block_;
    used_ = 0;
  }

  PhiloxKey key_;
  std::uint32_t domain_;
  std::uint32_t substream_;
  std::uint64_t block_ = 0;
  PhiloxBlock words_{};
  int used_ = 4;
};

// The three independent streams one SGD run consumes.
struct TrainStreams {
  RandomStream init;
  RandomStream shuffle;
  RandomStream noise;
};

inline TrainStreams DeriveStreams(std::uint64_t master_seed) {
  return {RandomStream(master_seed, StreamDomain::kInit),
          RandomStream(master_seed, StreamDomain::kShuffle),
          RandomStream(master_seed, StreamDomain::kNoise)};
}

}  // namespace sgdlab

#endif  // SGDLAB_RNG_HPP_
