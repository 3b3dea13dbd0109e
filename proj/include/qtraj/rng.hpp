// Copyright 2026 The qtraj Authors
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

// Counter-based seeding: every consumer draws from an engine keyed by
// (seed, stream, index), so results do not depend on scheduling.

#pragma once

#include <cstdint>
#include <random>

namespace qtraj {

using Engine = std::mt19937_64;

enum class Stream : std::uint64_t {
    shots = 1,
    split = 2,
    batches = 3,
    dropout = 4,
    init = 5,
    bootstrap = 6,
    conditioning = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return Engine(derive_seed(seed, stream, index));
}

}  // namespace qtraj
