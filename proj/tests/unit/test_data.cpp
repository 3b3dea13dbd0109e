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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "qtraj/data.hpp"
#include "qtraj/error.hpp"
#include "qtraj/sim.hpp"

using namespace qtraj;
using doctest::Approx;

namespace {

Dataset small_dataset(std::size_t n, std::uint64_t seed = 7) {
    SimConfig c;
    c.seed = seed;
    return make_dataset(generate_dataset(c, n), c);
}

std::uint32_t read_u32(const std::vector<std::uint8_t> &b, std::size_t at) {
    return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
           std::uint32_t(b[at + 3]) << 24;
}

void expect_io_error(const std::vector<std::uint8_t> &bytes) {
    try {
        decode_dataset(bytes);
        FAIL("corrupt input decoded");
    } catch (const Error &e) {
        CHECK(e.category() == ErrorCategory::io);
    }
}

}  // namespace

TEST_CASE("round trip") {
    const Dataset ds = small_dataset(400);
    const auto bytes = encode_dataset(ds);
    const Dataset back = decode_dataset(bytes);
    CHECK(back == ds);
    CHECK(encode_dataset(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "qtraj_unit_data.qtrj";
    write_dataset(path, ds);
    CHECK(read_dataset(path) == ds);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_dataset(path), Error);
}

TEST_CASE("empty dataset round trips") {
    Dataset empty;
    empty.config = SimConfig{}.to_json();
    CHECK(decode_dataset(encode_dataset(empty)) == empty);
}

TEST_CASE("corruption is detected") {
    const Dataset ds = small_dataset(50);
    const auto bytes = encode_dataset(ds);
    const std::size_t manifest_len = read_u32(bytes, 6);
    const std::size_t records_at = 10 + manifest_len;

    auto bad = bytes;
    bad[0] = 'X';
    expect_io_error(bad);

    bad = bytes;
    bad[6] = 0xff;
    bad[7] = 0xff;
    expect_io_error(bad);

    // Inflate the first non-empty record's step count.
    bad = bytes;
    std::size_t at = records_at;
    for (const auto &r : ds.records) {
        if (!r.voltages.empty()) break;
        at += 6 + 4 * r.voltages.size();
    }
    bad[at + 4] = 0xff;
    bad[at + 5] = 0xff;
    expect_io_error(bad);

    bad = bytes;
    bad[bytes.size() - 20] ^= 0x40;  // sample bits, caught by the checksum
    expect_io_error(bad);

    bad = bytes;
    bad[records_at] = 7;  // invalid axis
    expect_io_error(bad);

    bad = bytes;
    bad.resize(bytes.size() - 3);
    expect_io_error(bad);

    bad = bytes;
    bad.push_back(0);
    expect_io_error(bad);
}

TEST_CASE("split") {
    const Dataset ds = small_dataset(1000);
    const auto [a, b] = split(ds, 0.25, 3);
    CHECK(a.size() == 750);
    CHECK(b.size() == 250);
    const auto [c, d] = split(ds, 0.25, 3);
    CHECK(a == c);
    CHECK(b == d);
    const auto [e, f] = split(ds, 0.25, 4);
    CHECK(!(b == f));

    std::multiset<std::vector<float>> whole, parts;
    for (const auto &r : ds.records) whole.insert(r.voltages);
    for (const auto &r : a.records) parts.insert(r.voltages);
    for (const auto &r : b.records) parts.insert(r.voltages);
    CHECK(whole == parts);
    CHECK_THROWS_AS(split(ds, 0.0, 1), Error);
}

TEST_CASE("batches") {
    Dataset same;
    same.records.assign(2048, TrajectoryRecord{{1, Axis::Z}, {1, Axis::Z}, std::vector<float>(5, 0.0f)});
    const auto full = batches(same, 1024, 1);
    REQUIRE(full.size() == 2);
    CHECK(full[0].indices.size() == 1024);
    CHECK(full[1].indices.size() == 1024);

    const Dataset ds = small_dataset(3000);
    const auto plan1 = batches(ds, 64, 1);
    const auto plan2 = batches(ds, 64, 2);
    std::multiset<std::size_t> m1, m2;
    for (const auto &b : plan1) {
        CHECK(b.indices.size() <= 64);
        for (std::size_t i : b.indices) {
            CHECK(ds.records[i].step_count() == b.step_count);
            m1.insert(i);
        }
    }
    for (const auto &b : plan2) m2.insert(b.indices.begin(), b.indices.end());
    CHECK(m1.size() == ds.size());
    CHECK(m1 == m2);
    bool differ = plan1.size() != plan2.size();
    for (std::size_t k = 0; !differ && k < plan1.size(); ++k) differ = plan1[k].indices != plan2[k].indices;
    CHECK(differ);
    CHECK_THROWS_AS(batches(ds, 0, 1), Error);
}

TEST_CASE("normalization") {
    const Dataset ds = small_dataset(2000);
    const NormStats stats = compute_norm_stats(ds);
    const Dataset n = normalize(ds);
    CHECK(n.normalized);
    double s = 0.0, s2 = 0.0;
    std::size_t count = 0;
    for (const auto &r : n.records) {
        for (float v : r.voltages) {
            s += v;
            s2 += double(v) * v;
            ++count;
        }
    }
    const double mean = s / count;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::sqrt(s2 / count - mean * mean) == Approx(1.0).epsilon(1e-6));
    CHECK(normalize(ds, stats) == normalize(ds, stats));
    CHECK_THROWS_AS(normalize(n), Error);

    // Without measurement the raw record is centred noise.
    SimConfig quiet;
    quiet.meas_rate = 0.0;
    const Dataset noise = make_dataset(generate_dataset(quiet, 2000), quiet);
    const NormStats q = compute_norm_stats(noise);
    CHECK(std::abs(q.mean) < 4.0 * q.std / std::sqrt(double(noise.sample_count())));

    Dataset flat;
    flat.records.assign(3, TrajectoryRecord{{1, Axis::Z}, {1, Axis::Z}, std::vector<float>(4, 1.0f)});
    CHECK_THROWS_AS(compute_norm_stats(flat), Error);
}
