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

#include "qtraj/infer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "qtraj/parallel.hpp"

namespace qtraj {

namespace {

void require_direction(const RnnModel &model, Direction d) {
    if (model.direction != d) {
        fail_config("model direction is " + to_string(model.direction) + ", expected " + to_string(d));
    }
}

}  // namespace

PredictionSeries predict_forward(const RnnModel &model, std::span<const float> voltages, const Conditioning &prep,
                                 double dt) {
    require_direction(model, Direction::forward);
    PredictionSeries out = forward(model, voltages, prep).probs;
    out.dt = dt;
    return out;
}

PredictionSeries predict_backward(const RnnModel &model, std::span<const float> voltages, const Conditioning &meas,
                                  double dt) {
    require_direction(model, Direction::backward);
    std::vector<float> reversed(voltages.rbegin(), voltages.rend());
    PredictionSeries out = forward(model, reversed, meas).probs;
    std::reverse(out.probs.begin(), out.probs.end());
    out.dt = dt;
    return out;
}

std::vector<PredictionSeries> predict_all(const RnnModel &model, const Dataset &ds, double dt,
                                          bool unknown_conditioning, unsigned workers, std::size_t batch_size) {
    if (ds.normalized) fail_config("prediction expects raw (unnormalized) voltages");
    std::vector<PredictionSeries> out(ds.size());
    const auto plan = batches(ds, batch_size, 0);
    const bool fwd = model.direction == Direction::forward;
    parallel_for(plan.size(), workers, [&](std::size_t k) {
        const Batch &b = plan[k];
        std::vector<const TrajectoryRecord *> recs;
        recs.reserve(b.indices.size());
        for (std::size_t i : b.indices) recs.push_back(&ds.records[i]);
        const std::vector<bool> unknown(unknown_conditioning ? recs.size() : 0, true);
        const auto probs = forward(model, make_batch(model, recs, unknown));
        const std::size_t steps = b.step_count;
        for (std::size_t j = 0; j < recs.size(); ++j) {
            PredictionSeries s;
            s.dt = dt;
            s.probs.resize(steps + 1);
            for (std::size_t t = 0; t <= steps; ++t) {
                const auto &m = probs[fwd ? t : steps - t];
                const auto col = static_cast<Eigen::Index>(j);
                s.probs[t] = {m(0, col), m(1, col), m(2, col)};
            }
            out[b.indices[j]] = std::move(s);
        }
    });
    return out;
}

double logit(double p) {
    p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
    return std::log(p) - std::log1p(-p);
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double smooth_probability(double backward_p, double forward_p) {
    return std::clamp(logistic(logit(backward_p) + logit(forward_p)), kProbFloor, 1.0 - kProbFloor);
}

PredictionSeries smooth(const PredictionSeries &forward_p, const PredictionSeries &backward_p) {
    if (forward_p.size() != backward_p.size()) fail_config("smoothing needs series of equal length");
    PredictionSeries out;
    out.dt = forward_p.dt;
    out.probs.resize(forward_p.size());
    for (std::size_t t = 0; t < forward_p.size(); ++t) {
        for (int a = 0; a < 3; ++a) out.probs[t][a] = smooth_probability(backward_p.probs[t][a], forward_p.probs[t][a]);
    }
    return out;
}

std::size_t PredictionTable::record_count() const {
    return std::max({forward.size(), backward.size(), smoothed.size()});
}

namespace {

void append_number(std::string &line, double v, int precision) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
    line.append(buf, res.ptr);
}

const PredictionSeries *series_or_null(const std::vector<PredictionSeries> &v, std::size_t i) {
    return i < v.size() ? &v[i] : nullptr;
}

}  // namespace

void write_prediction_csv(std::ostream &out, const PredictionTable &table) {
    const std::size_t n = table.record_count();
    for (const auto *group : {&table.forward, &table.backward, &table.smoothed}) {
        if (!group->empty() && group->size() != n) fail_config("prediction columns cover different record counts");
    }
    out << "record_id,t_us,axis,p_forward,p_backward,p_smoothed\n";
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
        const PredictionSeries *cols[3] = {series_or_null(table.forward, i), series_or_null(table.backward, i),
                                           series_or_null(table.smoothed, i)};
        std::size_t len = 0;
        for (const auto *c : cols) {
            if (!c) continue;
            if (len && c->size() != len) fail_config("prediction columns differ in length for record " + std::to_string(i));
            len = c->size();
        }
        for (std::size_t t = 0; t < len; ++t) {
            for (Axis a : kAxes) {
                line.clear();
                line += std::to_string(i);
                line += ',';
                append_number(line, table.dt * static_cast<double>(t), 10);
                line += ',';
                line += axis_name(a);
                for (const auto *c : cols) {
                    line += ',';
                    if (c) append_number(line, c->at(t, a), 12);
                }
                line += '\n';
                out << line;
            }
        }
    }
    if (!out) fail_io("failed writing prediction CSV");
}

PredictionTable read_prediction_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) fail_io("empty prediction CSV");
    if (line.rfind("record_id,t_us,axis,p_forward,p_backward,p_smoothed", 0) != 0) fail_io("unexpected prediction CSV header");

    PredictionTable table;
    std::array<std::vector<PredictionSeries> *, 3> groups{&table.forward, &table.backward, &table.smoothed};
    std::array<int, 3> present{-1, -1, -1};  // unknown until first row
    std::size_t line_no = 1;
    std::size_t current = static_cast<std::size_t>(-1);
    std::size_t row_in_record = 0;
    bool dt_known = false;

    auto parse_double = [&](std::string_view s, double &v) {
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            fail_io("bad number '" + std::string(s) + "' on CSV line " + std::to_string(line_no));
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::array<std::string_view, 6> f;
        std::size_t start = 0;
        for (int k = 0; k < 6; ++k) {
            const std::size_t comma = line.find(',', start);
            if ((k < 5) == (comma == std::string::npos)) fail_io("expected 6 fields on CSV line " + std::to_string(line_no));
            f[k] = std::string_view(line).substr(start, (k < 5 ? comma : line.size()) - start);
            start = comma + 1;
        }
        std::size_t id = 0;
        {
            const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), id);
            if (res.ec != std::errc()) fail_io("bad record_id on CSV line " + std::to_string(line_no));
        }
        if (id != current) {
            if (id != current + 1) fail_io("record ids must be contiguous from 0 (line " + std::to_string(line_no) + ")");
            if (current != static_cast<std::size_t>(-1) && row_in_record % 3 != 0) fail_io("incomplete time step in CSV");
            current = id;
            row_in_record = 0;
            for (int g = 0; g < 3; ++g) {
                if (present[g] == -1) present[g] = f[3 + g].empty() ? 0 : 1;
                if (present[g]) groups[g]->emplace_back();
            }
        }
        const std::size_t t = row_in_record / 3;
        const Axis axis = parse_axis(f[2]);
        if (axis_index(axis) != static_cast<int>(row_in_record % 3)) fail_io("axis rows out of order on CSV line " + std::to_string(line_no));
        double t_us = 0.0;
        parse_double(f[1], t_us);
        if (t == 1 && !dt_known) {
            table.dt = t_us;
            dt_known = true;
        }
        for (int g = 0; g < 3; ++g) {
            if ((present[g] == 1) == f[3 + g].empty()) fail_io("inconsistent column presence on CSV line " + std::to_string(line_no));
            if (!present[g]) continue;
            auto &s = groups[g]->back();
            if (s.probs.size() <= t) s.probs.resize(t + 1);
            parse_double(f[3 + g], s.probs[t][axis_index(axis)]);
        }
        ++row_in_record;
    }
    if (row_in_record % 3 != 0) fail_io("incomplete time step at end of CSV");
    for (auto *g : groups) {
        for (auto &s : *g) s.dt = table.dt;
    }
    return table;
}

}  // namespace qtraj
