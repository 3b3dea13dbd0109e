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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qtraj/core.hpp"
#include "qtraj/sim.hpp"

namespace qtraj {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kMaxSteps = 65535;

struct TrajectoryRecord {
    Label prep;
    Label meas;
    std::vector<float> voltages;

    std::size_t step_count() const { return voltages.size(); }
    friend bool operator==(const TrajectoryRecord &, const TrajectoryRecord &) = default;
};

TrajectoryRecord to_record(const SimulatedShot &shot);

/// z-scoring statistics of the raw voltages.
struct NormStats {
    double mean = 0.0;
    double std = 1.0;

    double apply(double v) const { return (v - mean) / std; }
    friend bool operator==(const NormStats &, const NormStats &) = default;
};

struct Dataset {
    nlohmann::json config = nlohmann::json::object();
    std::optional<NormStats> norm;
    /// True once voltages have been z-scored with `norm`.
    bool normalized = false;
    std::vector<TrajectoryRecord> records;

    std::size_t size() const { return records.size(); }
    std::size_t sample_count() const;
    nlohmann::json manifest() const;

    friend bool operator==(const Dataset &, const Dataset &) = default;
};

Dataset make_dataset(const std::vector<SimulatedShot> &shots, const SimConfig &cfg);

// QTRJ container: magic, u16 version, u32 manifest length, JSON manifest,
// packed records, CRC-32 of the record section. All integers little-endian.
std::vector<std::uint8_t> encode_dataset(const Dataset &ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path &path, const Dataset &ds);
Dataset read_dataset(const std::filesystem::path &path);

/// Disjoint random split; both halves keep the original record order.
std::pair<Dataset, Dataset> split(const Dataset &ds, double eval_fraction, std::uint64_t seed);

struct Batch {
    std::size_t step_count = 0;
    std::vector<std::size_t> indices;
};

/// One epoch of length-bucketed batches; records are shuffled within each
/// bucket and the batch order is shuffled across buckets.
std::vector<Batch> batches(const Dataset &ds, std::size_t batch_size, std::uint64_t shuffle_seed);

NormStats compute_norm_stats(const Dataset &ds);
/// Applies statistics computed from `ds` itself and records them in the manifest.
Dataset normalize(const Dataset &ds);
Dataset normalize(const Dataset &ds, const NormStats &stats);

}  // namespace qtraj
