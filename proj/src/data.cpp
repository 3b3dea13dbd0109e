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

#include "qtraj/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include <zlib.h>

#include "qtraj/error.hpp"
#include "qtraj/rng.hpp"

namespace qtraj {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'Q', 'T', 'R', 'J'};
constexpr std::size_t kRecordHeader = 6;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v & 0xff));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>((v >> s) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void *p, std::size_t n) {
        const auto *b = static_cast<const std::uint8_t *>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::size_t size() const { return buf_.size(); }
    std::vector<std::uint8_t> &buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char *what) const {
        if (bytes_.size() - pos_ < n) fail_io(std::string("truncated trajectory file while reading ") + what);
    }
    std::uint8_t u8(const char *what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint16_t u16(const char *what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char *what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32(const char *what) { return std::bit_cast<float>(u32(what)); }
    std::span<const std::uint8_t> take(std::size_t n, const char *what) {
        need(n, what);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

Label read_label(std::uint8_t axis, std::uint8_t bit) {
    if (axis > 2) fail_io("corrupt record: axis byte " + std::to_string(axis));
    if (bit > 1) fail_io("corrupt record: outcome byte " + std::to_string(bit));
    return Label{bit, static_cast<Axis>(axis)};
}

}  // namespace

TrajectoryRecord to_record(const SimulatedShot &shot) {
    if (shot.record.size() > kMaxSteps) fail_config("record longer than 65535 steps");
    return TrajectoryRecord{shot.prep, shot.meas, shot.record};
}

std::size_t Dataset::sample_count() const {
    std::size_t n = 0;
    for (const auto &r : records) n += r.step_count();
    return n;
}

nlohmann::json Dataset::manifest() const {
    nlohmann::json m;
    m["format"] = "qtraj-trajectories";
    m["config"] = config;
    m["counts"] = {{"records", records.size()}, {"samples", sample_count()}};
    if (norm) {
        m["normalization"] = {{"mean", norm->mean}, {"std", norm->std}};
    } else {
        m["normalization"] = nullptr;
    }
    m["normalized"] = normalized;
    return m;
}

Dataset make_dataset(const std::vector<SimulatedShot> &shots, const SimConfig &cfg) {
    Dataset ds;
    ds.config = cfg.to_json();
    ds.records.reserve(shots.size());
    for (const auto &s : shots) ds.records.push_back(to_record(s));
    if (ds.sample_count() >= 2) {
        try {
            ds.norm = compute_norm_stats(ds);
        } catch (const Error &) {
            // zero-variance records (e.g. all empty) carry no statistics
        }
    }
    return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset &ds) {
    ByteWriter w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u16(kDatasetVersion);
    const std::string manifest = ds.manifest().dump();
    w.u32(static_cast<std::uint32_t>(manifest.size()));
    w.bytes(manifest.data(), manifest.size());
    const std::size_t section_start = w.size();
    for (const auto &r : ds.records) {
        if (r.step_count() > kMaxSteps) fail_config("record longer than 65535 steps");
        w.u8(static_cast<std::uint8_t>(r.prep.axis));
        w.u8(r.prep.bit);
        w.u8(static_cast<std::uint8_t>(r.meas.axis));
        w.u8(r.meas.bit);
        w.u16(static_cast<std::uint16_t>(r.step_count()));
        for (float v : r.voltages) w.f32(v);
    }
    auto &buf = w.buffer();
    const std::uint32_t crc = crc_of(std::span<const std::uint8_t>(buf).subspan(section_start));
    w.u32(crc);
    return std::move(buf);
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) fail_io("not a trajectory file (bad magic)");
    const std::uint16_t version = r.u16("version");
    if (version != kDatasetVersion) fail_io("unsupported trajectory file version " + std::to_string(version));
    const std::uint32_t manifest_len = r.u32("manifest length");
    const auto manifest_bytes = r.take(manifest_len, "manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const nlohmann::json::exception &e) {
        fail_io(std::string("corrupt manifest: ") + e.what());
    }

    Dataset ds;
    std::size_t record_count = 0;
    std::size_t sample_count = 0;
    try {
        ds.config = manifest.at("config");
        record_count = manifest.at("counts").at("records").get<std::size_t>();
        sample_count = manifest.at("counts").at("samples").get<std::size_t>();
        const auto &norm = manifest.at("normalization");
        if (!norm.is_null()) ds.norm = NormStats{norm.at("mean").get<double>(), norm.at("std").get<double>()};
        ds.normalized = manifest.at("normalized").get<bool>();
    } catch (const nlohmann::json::exception &e) {
        fail_io(std::string("incomplete manifest: ") + e.what());
    }
    if (ds.norm && !(ds.norm->std > 0.0)) fail_io("manifest normalization std must be > 0");

    const std::size_t section_start = r.pos();
    // Each record needs at least its header; reject absurd counts before allocating.
    if (record_count > r.remaining() / kRecordHeader) fail_io("truncated trajectory file: record count exceeds data");
    ds.records.reserve(record_count);
    for (std::size_t i = 0; i < record_count; ++i) {
        TrajectoryRecord rec;
        const std::uint8_t prep_axis = r.u8("record header");
        const std::uint8_t prep_bit = r.u8("record header");
        const std::uint8_t meas_axis = r.u8("record header");
        const std::uint8_t meas_bit = r.u8("record header");
        rec.prep = read_label(prep_axis, prep_bit);
        rec.meas = read_label(meas_axis, meas_bit);
        const std::uint16_t steps = r.u16("record header");
        r.need(static_cast<std::size_t>(steps) * 4 + 4, "record samples");
        rec.voltages.resize(steps);
        for (auto &v : rec.voltages) v = r.f32("record samples");
        ds.records.push_back(std::move(rec));
    }
    const std::size_t section_end = r.pos();
    const std::uint32_t stored_crc = r.u32("checksum");
    if (r.remaining() != 0) fail_io("trailing bytes after trajectory checksum");
    if (crc_of(bytes.subspan(section_start, section_end - section_start)) != stored_crc) {
        fail_io("trajectory checksum mismatch");
    }
    if (ds.sample_count() != sample_count) fail_io("manifest sample count does not match records");
    return ds;
}

void write_dataset(const std::filesystem::path &path, const Dataset &ds) {
    const auto bytes = encode_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_dataset(bytes);
}

std::pair<Dataset, Dataset> split(const Dataset &ds, double eval_fraction, std::uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) fail_config("eval_fraction must lie in (0, 1)");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    Engine rng = make_engine(seed, Stream::split, 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> eval_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    auto subset = [&](const std::vector<std::size_t> &idx) {
        Dataset out;
        out.config = ds.config;
        out.norm = ds.norm;
        out.normalized = ds.normalized;
        out.records.reserve(idx.size());
        for (std::size_t i : idx) out.records.push_back(ds.records[i]);
        return out;
    };
    return {subset(train_idx), subset(eval_idx)};
}

std::vector<Batch> batches(const Dataset &ds, std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (batch_size < 1) fail_config("batch_size must be >= 1");
    std::map<std::size_t, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < ds.size(); ++i) buckets[ds.records[i].step_count()].push_back(i);

    Engine rng = make_engine(shuffle_seed, Stream::batches, 0);
    std::vector<Batch> out;
    for (auto &[steps, idx] : buckets) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t lo = 0; lo < idx.size(); lo += batch_size) {
            const std::size_t hi = std::min(idx.size(), lo + batch_size);
            out.push_back(Batch{steps, std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                                                idx.begin() + static_cast<std::ptrdiff_t>(hi))});
        }
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

NormStats compute_norm_stats(const Dataset &ds) {
    const std::size_t n = ds.sample_count();
    if (n < 2) fail_numeric("normalization needs at least 2 voltage samples");
    double sum = 0.0;
    for (const auto &r : ds.records) {
        for (float v : r.voltages) sum += v;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto &r : ds.records) {
        for (float v : r.voltages) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) fail_numeric("voltage samples have zero variance");
    return NormStats{mean, sd};
}

Dataset normalize(const Dataset &ds) { return normalize(ds, compute_norm_stats(ds)); }

Dataset normalize(const Dataset &ds, const NormStats &stats) {
    if (ds.normalized) fail_config("dataset is already normalized");
    if (!(stats.std > 0.0)) fail_numeric("normalization std must be > 0");
    Dataset out = ds;
    for (auto &r : out.records) {
        for (auto &v : r.voltages) v = static_cast<float>(stats.apply(v));
    }
    out.norm = stats;
    out.normalized = true;
    return out;
}

}  // namespace qtraj
