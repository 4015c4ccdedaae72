// Copyright 2026 The Memaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEMAUDIT_RANDOM_H_
#define MEMAUDIT_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace memaudit {

// All randomness in the toolkit flows from std::mt19937_64 engines seeded
// through MixSeed, so every result is a pure function of the caller's seeds.
using Rng = std::mt19937_64;

// SplitMix64 finalizer.
uint64_t SplitMix64(uint64_t x);

// Order-sensitive combination of a base seed with any number of task keys,
// e.g. MixSeed(master, {target_id, pair_index, in_out_flag}).
uint64_t MixSeed(uint64_t base, std::initializer_list<uint64_t> keys);

// Domain tags keep seeds for different purposes (subsampling, learner init,
// game coin flips, ...) from colliding when the numeric keys coincide.
enum class SeedTag : uint64_t {
  kSubsample = 0x5375627361ULL,
  kLearnerInit = 0x4c6561726eULL,
  kGameCoin = 0x436f696eULL,
  kVictim = 0x566963ULL,
  kResample = 0x526573ULL,
  kSelection = 0x53656cULL,
  kAttackModel = 0x41746bULL,
};

inline uint64_t Tag(SeedTag t) { return static_cast<uint64_t>(t); }

}  // namespace memaudit

#endif  // MEMAUDIT_RANDOM_H_
