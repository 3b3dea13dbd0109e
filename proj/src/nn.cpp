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

#include "qtraj/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "qtraj/rng.hpp"

namespace qtraj {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void sigmoid_inplace(Eigen::Ref<MatrixXd> z) { z = 0.5 * ((0.5 * z.array()).tanh() + 1.0); }

void activate_inplace(Eigen::Ref<MatrixXd> z, Activation a) {
    if (a == Activation::tanh) {
        z = z.array().tanh();
    } else {
        z = z.array().max(0.0);
    }
}

// Derivative expressed through the activation's output.
MatrixXd activation_grad(const MatrixXd &out, Activation a) {
    if (a == Activation::tanh) return (1.0 - out.array().square()).matrix();
    return (out.array() > 0.0).cast<double>().matrix();
}

double sigmoid(double x) { return 0.5 * (std::tanh(0.5 * x) + 1.0); }

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

struct StepCache {
    MatrixXd gates;  // 4n x B after activation: i, f, g, o
    MatrixXd c;
    MatrixXd act_c;
    MatrixXd h;
};

// One LSTM step; h and c are updated in place.
void lstm_step(const RnnModel &model, const Eigen::Ref<const Eigen::RowVectorXd> &x, MatrixXd &h, MatrixXd &c,
               MatrixXd &gates, MatrixXd &act_c) {
    const int n = model.hidden;
    const auto &p = model.params;
    gates.resize(4 * n, h.cols());
    gates.noalias() = p.w_hidden * h;
    gates.noalias() += p.w_input * x;
    gates.colwise() += p.bias.col(0);
    sigmoid_inplace(gates.topRows(2 * n));
    activate_inplace(gates.middleRows(2 * n, n), model.activation);
    sigmoid_inplace(gates.bottomRows(n));
    c = gates.middleRows(n, n).cwiseProduct(c) + gates.topRows(n).cwiseProduct(gates.middleRows(2 * n, n));
    act_c = c;
    activate_inplace(act_c, model.activation);
    h = gates.bottomRows(n).cwiseProduct(act_c);
}

MatrixXd head_probs(const RnnModel &model, const MatrixXd &h) {
    MatrixXd logits = model.params.head_w * h;
    logits.colwise() += model.params.head_b.col(0);
    return logits.unaryExpr([](double z) { return clamp_prob(sigmoid(z)); });
}

void require_finite(const MatrixXd &m, const char *what) {
    if (!m.allFinite()) fail_numeric(std::string("non-finite ") + what + " in recurrent network");
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }
std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Direction parse_direction(std::string_view s) {
    if (s == "forward") return Direction::forward;
    if (s == "backward") return Direction::backward;
    fail_config("unknown direction '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    fail_config("unknown activation '" + std::string(s) + "'");
}

LstmParams LstmParams::zeros(int n) {
    LstmParams p;
    p.w_input = MatrixXd::Zero(4 * n, 1);
    p.w_hidden = MatrixXd::Zero(4 * n, n);
    p.bias = MatrixXd::Zero(4 * n, 1);
    p.enc_h = MatrixXd::Zero(n, 6);
    p.enc_c = MatrixXd::Zero(n, 6);
    p.head_w = MatrixXd::Zero(3, n);
    p.head_b = MatrixXd::Zero(3, 1);
    return p;
}

LstmParams LstmParams::zeros_like() const { return zeros(static_cast<int>(w_hidden.cols())); }

double LstmParams::squared_norm() const {
    double s = 0.0;
    for_each([&](const MatrixXd &m) { s += m.squaredNorm(); });
    return s;
}

bool LstmParams::all_finite() const {
    bool ok = true;
    for_each([&](const MatrixXd &m) { ok = ok && m.allFinite(); });
    return ok;
}

RnnModel RnnModel::zeros(int hidden, Direction direction, Activation activation) {
    if (hidden < 1) fail_config("hidden size must be >= 1");
    RnnModel m;
    m.hidden = hidden;
    m.direction = direction;
    m.activation = activation;
    m.params = LstmParams::zeros(hidden);
    return m;
}

RnnModel RnnModel::initialized(int hidden, Direction direction, Activation activation, std::uint64_t seed) {
    RnnModel m = zeros(hidden, direction, activation);
    Engine rng = make_engine(seed, Stream::init, 0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> uni(-scale, scale);
    auto fill = [&](MatrixXd &t) { t = t.unaryExpr([&](double) { return uni(rng); }); };
    fill(m.params.w_input);
    fill(m.params.w_hidden);
    fill(m.params.enc_h);
    fill(m.params.enc_c);
    m.params.bias.middleRows(hidden, hidden).setOnes();
    return m;
}

VectorXd one_hot(const Conditioning &label) {
    VectorXd v = VectorXd::Constant(6, 1.0 / 6.0);
    if (label) {
        v.setZero();
        v(label->index()) = 1.0;
    }
    return v;
}

std::pair<VectorXd, VectorXd> encode_prep(const RnnModel &model, const Conditioning &label) {
    const VectorXd code = one_hot(label);
    return {model.params.enc_h * code, model.params.enc_c * code};
}

SequenceBatch make_batch(const RnnModel &model, std::span<const TrajectoryRecord *const> records,
                         const std::vector<bool> &unknown) {
    if (records.empty()) fail_config("empty batch");
    if (!unknown.empty() && unknown.size() != records.size()) fail_config("unknown-conditioning flags size mismatch");
    const std::size_t steps = records.front()->step_count();
    const auto b = static_cast<Eigen::Index>(records.size());
    SequenceBatch batch;
    batch.inputs.resize(static_cast<Eigen::Index>(steps), b);
    batch.conditioning.resize(6, b);
    batch.target_head.resize(records.size());
    batch.target_bit.resize(records.size());
    const bool fwd = model.direction == Direction::forward;
    for (Eigen::Index j = 0; j < b; ++j) {
        const TrajectoryRecord &r = *records[static_cast<std::size_t>(j)];
        if (r.step_count() != steps) fail_config("batch records must share one length");
        for (std::size_t t = 0; t < steps; ++t) {
            const float v = fwd ? r.voltages[t] : r.voltages[steps - 1 - t];
            batch.inputs(static_cast<Eigen::Index>(t), j) = model.norm.apply(v);
        }
        const Label cond = fwd ? r.prep : r.meas;
        const Label target = fwd ? r.meas : r.prep;
        const bool hide = !unknown.empty() && unknown[static_cast<std::size_t>(j)];
        batch.conditioning.col(j) = one_hot(hide ? Conditioning{} : Conditioning{cond});
        batch.target_head[static_cast<std::size_t>(j)] = axis_index(target.axis);
        batch.target_bit[static_cast<std::size_t>(j)] = target.bit;
    }
    return batch;
}

std::vector<MatrixXd> forward(const RnnModel &model, const SequenceBatch &batch) {
    MatrixXd h = model.params.enc_h * batch.conditioning;
    MatrixXd c = model.params.enc_c * batch.conditioning;
    MatrixXd gates, act_c;
    std::vector<MatrixXd> out;
    out.reserve(batch.steps() + 1);
    out.push_back(head_probs(model, h));
    for (std::size_t t = 0; t < batch.steps(); ++t) {
        lstm_step(model, batch.inputs.row(static_cast<Eigen::Index>(t)), h, c, gates, act_c);
        require_finite(h, "activation");
        out.push_back(head_probs(model, h));
    }
    return out;
}

ForwardResult forward(const RnnModel &model, std::span<const float> voltages, const Conditioning &label,
                      const VectorXd *dropout_mask) {
    auto [h0, c0] = encode_prep(model, label);
    MatrixXd h = h0;
    MatrixXd c = c0;
    MatrixXd gates, act_c;
    ForwardResult res;
    res.hidden.resize(model.hidden, static_cast<Eigen::Index>(voltages.size() + 1));
    res.probs.probs.reserve(voltages.size() + 1);
    auto emit = [&](std::size_t t) {
        res.hidden.col(static_cast<Eigen::Index>(t)) = h.col(0);
        const MatrixXd p = dropout_mask ? head_probs(model, h.cwiseProduct(*dropout_mask)) : head_probs(model, h);
        res.probs.probs.push_back({p(0, 0), p(1, 0), p(2, 0)});
    };
    emit(0);
    Eigen::RowVectorXd x(1);
    for (std::size_t t = 0; t < voltages.size(); ++t) {
        x(0) = model.norm.apply(voltages[t]);
        lstm_step(model, x, h, c, gates, act_c);
        require_finite(h, "activation");
        emit(t + 1);
    }
    return res;
}

double loss(double p, int y) {
    p = clamp_prob(p);
    return y ? -std::log(p) : -std::log1p(-p);
}

double loss_and_gradient(const RnnModel &model, const SequenceBatch &batch, Gradients *grads,
                         const MatrixXd *dropout_mask) {
    const int n = model.hidden;
    const auto &p = model.params;
    const std::size_t steps = batch.steps();
    const auto b = static_cast<Eigen::Index>(batch.size());

    std::vector<StepCache> cache(steps + 1);
    cache[0].h = p.enc_h * batch.conditioning;
    cache[0].c = p.enc_c * batch.conditioning;
    for (std::size_t t = 0; t < steps; ++t) {
        StepCache &cur = cache[t + 1];
        cur.h = cache[t].h;
        cur.c = cache[t].c;
        lstm_step(model, batch.inputs.row(static_cast<Eigen::Index>(t)), cur.h, cur.c, cur.gates, cur.act_c);
    }
    const MatrixXd &h_last = cache[steps].h;
    require_finite(h_last, "activation");
    const MatrixXd head_in = dropout_mask ? MatrixXd(h_last.cwiseProduct(*dropout_mask)) : h_last;
    MatrixXd logits = p.head_w * head_in;
    logits.colwise() += p.head_b.col(0);

    double total = 0.0;
    MatrixXd dlogits = MatrixXd::Zero(3, b);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const int head = batch.target_head[static_cast<std::size_t>(j)];
        const int y = batch.target_bit[static_cast<std::size_t>(j)];
        const double prob = sigmoid(logits(head, j));
        total += loss(prob, y);
        dlogits(head, j) = (prob - y) * inv_b;
    }
    const double mean_loss = total * inv_b;
    if (!std::isfinite(mean_loss)) fail_numeric("non-finite loss");
    if (!grads) return mean_loss;

    Gradients &g = *grads;
    g = p.zeros_like();
    g.head_w.noalias() = dlogits * head_in.transpose();
    g.head_b = dlogits.rowwise().sum();
    MatrixXd dh = p.head_w.transpose() * dlogits;
    if (dropout_mask) dh = dh.cwiseProduct(*dropout_mask);
    MatrixXd dc = MatrixXd::Zero(n, b);
    MatrixXd dz(4 * n, b);

    for (std::size_t t = steps; t >= 1; --t) {
        const StepCache &cur = cache[t];
        const StepCache &prev = cache[t - 1];
        const auto i_g = cur.gates.topRows(n).array();
        const auto f_g = cur.gates.middleRows(n, n).array();
        const auto c_g = cur.gates.middleRows(2 * n, n).array();
        const auto o_g = cur.gates.bottomRows(n).array();

        dc.array() += dh.array() * o_g * activation_grad(cur.act_c, model.activation).array();
        dz.bottomRows(n).array() = dh.array() * cur.act_c.array() * o_g * (1.0 - o_g);
        dz.topRows(n).array() = dc.array() * c_g * i_g * (1.0 - i_g);
        dz.middleRows(n, n).array() = dc.array() * prev.c.array() * f_g * (1.0 - f_g);
        dz.middleRows(2 * n, n).array() =
            dc.array() * i_g * activation_grad(cur.gates.middleRows(2 * n, n), model.activation).array();

        g.w_hidden.noalias() += dz * prev.h.transpose();
        g.w_input.noalias() += dz * batch.inputs.row(static_cast<Eigen::Index>(t - 1)).transpose();
        g.bias += dz.rowwise().sum();
        dh.noalias() = p.w_hidden.transpose() * dz;
        dc.array() *= f_g;
    }
    g.enc_h.noalias() = dh * batch.conditioning.transpose();
    g.enc_c.noalias() = dc * batch.conditioning.transpose();
    if (!g.all_finite()) fail_numeric("non-finite gradient");
    return mean_loss;
}

Gradients backward(const RnnModel &model, std::span<const TrajectoryRecord *const> records) {
    Gradients g;
    loss_and_gradient(model, make_batch(model, records), &g);
    return g;
}

AdamState AdamState::for_model(const RnnModel &model) {
    AdamState s;
    s.m = model.params.zeros_like();
    s.v = model.params.zeros_like();
    return s;
}

void adam_step(RnnModel &model, const Gradients &grads, AdamState &state, double lr) {
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    LstmParams &params = model.params;
    // Walk the four parameter sets in lockstep.
    std::array<MatrixXd *, 7> theta{}, m{}, v{};
    std::array<const MatrixXd *, 7> g{};
    std::size_t k = 0;
    params.for_each([&](MatrixXd &t) { theta[k++] = &t; });
    k = 0;
    state.m.for_each([&](MatrixXd &t) { m[k++] = &t; });
    k = 0;
    state.v.for_each([&](MatrixXd &t) { v[k++] = &t; });
    k = 0;
    grads.for_each([&](const MatrixXd &t) { g[k++] = &t; });
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (g[i]->rows() != theta[i]->rows() || g[i]->cols() != theta[i]->cols()) {
            fail_config("gradient shape does not match model");
        }
        m[i]->array() = state.beta1 * m[i]->array() + (1.0 - state.beta1) * g[i]->array();
        v[i]->array() = state.beta2 * v[i]->array() + (1.0 - state.beta2) * g[i]->array().square();
        theta[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + state.epsilon);
    }
}

double clip_global_norm(Gradients &grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        grads.for_each([&](MatrixXd &m) { m *= s; });
    }
    return norm;
}

void TrainConfig::validate() const {
    if (hidden < 1) fail_config("hidden must be >= 1");
    if (epochs < 1) fail_config("epochs must be >= 1");
    if (batch_size < 1) fail_config("batch_size must be >= 1");
    if (!(lr_start > 0.0) || !(lr_end > 0.0)) fail_config("learning rates must be positive");
    if (!(dropout_start >= 0.0 && dropout_start < 1.0) || !(dropout_end >= 0.0 && dropout_end < 1.0)) {
        fail_config("dropout must lie in [0, 1)");
    }
    if (!(clip_norm > 0.0)) fail_config("clip_norm must be positive");
    if (!(unknown_conditioning_fraction >= 0.0 && unknown_conditioning_fraction <= 1.0)) {
        fail_config("unknown_conditioning_fraction must lie in [0, 1]");
    }
}

double TrainConfig::learning_rate(int epoch) const {
    if (epochs == 1) return lr_start;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, frac);
}

double TrainConfig::dropout(int epoch) const {
    if (epochs == 1) return dropout_start;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return dropout_start + (dropout_end - dropout_start) * frac;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"hidden", hidden},
            {"activation", to_string(activation)},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr_start", lr_start},
            {"lr_end", lr_end},
            {"dropout_start", dropout_start},
            {"dropout_end", dropout_end},
            {"clip_norm", clip_norm},
            {"unknown_conditioning_fraction", unknown_conditioning_fraction},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json &j) {
    if (!j.is_object()) fail_config("train config must be a JSON object");
    static const std::set<std::string> known{"hidden",      "activation", "epochs",        "batch_size",
                                             "lr_start",    "lr_end",     "dropout_start", "dropout_end",
                                             "clip_norm",   "unknown_conditioning_fraction", "seed"};
    for (const auto &[key, _] : j.items()) {
        if (!known.count(key)) fail_config("unknown train config key '" + key + "'");
    }
    TrainConfig c;
    try {
        c.hidden = j.value("hidden", c.hidden);
        if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr_start = j.value("lr_start", c.lr_start);
        c.lr_end = j.value("lr_end", c.lr_end);
        c.dropout_start = j.value("dropout_start", c.dropout_start);
        c.dropout_end = j.value("dropout_end", c.dropout_end);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.unknown_conditioning_fraction = j.value("unknown_conditioning_fraction", c.unknown_conditioning_fraction);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception &e) {
        fail_config(std::string("bad train config: ") + e.what());
    }
    c.validate();
    return c;
}

double evaluate_loss(const RnnModel &model, const Dataset &ds, std::size_t batch_size) {
    if (ds.size() == 0) return 0.0;
    double total = 0.0;
    // Seed only affects ordering, which the mean does not depend on.
    for (const Batch &b : batches(ds, batch_size, 0)) {
        std::vector<const TrajectoryRecord *> recs;
        recs.reserve(b.indices.size());
        for (std::size_t i : b.indices) recs.push_back(&ds.records[i]);
        total += loss_and_gradient(model, make_batch(model, recs), nullptr) * static_cast<double>(recs.size());
    }
    return total / static_cast<double>(ds.size());
}

TrainResult train(const Dataset &train_set, const Dataset &eval_set, const TrainConfig &cfg, Direction direction,
                  const std::function<void(const EpochStats &)> &on_epoch) {
    cfg.validate();
    if (train_set.size() == 0) fail_config("training set is empty");
    if (train_set.normalized || eval_set.normalized) fail_config("train expects raw (unnormalized) voltages");

    TrainResult result;
    result.model = RnnModel::initialized(cfg.hidden, direction, cfg.activation, cfg.seed);
    result.model.norm = compute_norm_stats(train_set);
    RnnModel &model = result.model;
    AdamState adam = AdamState::for_model(model);
    RnnModel last_good = model;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.learning_rate = cfg.learning_rate(epoch);
        stats.dropout = cfg.dropout(epoch);
        const double keep = 1.0 - stats.dropout;
        double total = 0.0;
        const auto plan = batches(train_set, cfg.batch_size, derive_seed(cfg.seed, Stream::batches, epoch));
        try {
            for (std::size_t k = 0; k < plan.size(); ++k) {
                const std::uint64_t tag = (static_cast<std::uint64_t>(epoch) << 32) | k;
                std::vector<const TrajectoryRecord *> recs;
                recs.reserve(plan[k].indices.size());
                for (std::size_t i : plan[k].indices) recs.push_back(&train_set.records[i]);

                std::vector<bool> unknown;
                if (cfg.unknown_conditioning_fraction > 0.0) {
                    Engine rng = make_engine(cfg.seed, Stream::conditioning, tag);
                    std::bernoulli_distribution hide(cfg.unknown_conditioning_fraction);
                    unknown.resize(recs.size());
                    for (std::size_t j = 0; j < recs.size(); ++j) unknown[j] = hide(rng);
                }
                const SequenceBatch batch = make_batch(model, recs, unknown);

                Eigen::MatrixXd mask;
                if (stats.dropout > 0.0) {
                    Engine rng = make_engine(cfg.seed, Stream::dropout, tag);
                    std::bernoulli_distribution alive(keep);
                    mask.resize(model.hidden, static_cast<Eigen::Index>(recs.size()));
                    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
                        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = alive(rng) ? 1.0 / keep : 0.0;
                    }
                }
                Gradients g;
                total += loss_and_gradient(model, batch, &g, stats.dropout > 0.0 ? &mask : nullptr) *
                         static_cast<double>(recs.size());
                clip_global_norm(g, cfg.clip_norm);
                adam_step(model, g, adam, stats.learning_rate);
            }
        } catch (const Error &e) {
            if (e.category() != ErrorCategory::numeric) throw;
            throw TrainingDiverged(std::string("training diverged: ") + e.what(), last_good);
        }
        stats.train_loss = total / static_cast<double>(train_set.size());
        stats.eval_loss = eval_set.size() ? evaluate_loss(model, eval_set) : stats.train_loss;
        if (!std::isfinite(stats.eval_loss) || !model.params.all_finite()) {
            throw TrainingDiverged("training diverged: non-finite evaluation loss", last_good);
        }
        last_good = model;
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

namespace {

constexpr std::array<std::uint8_t, 4> kModelMagic{'Q', 'R', 'N', 'N'};
constexpr int kModelVersion = 1;

void put_u32(std::vector<std::uint8_t> &buf, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

}  // namespace

std::vector<std::uint8_t> encode_model(const RnnModel &model) {
    nlohmann::json manifest;
    manifest["format"] = "qtraj-rnn";
    manifest["version"] = kModelVersion;
    manifest["architecture"] = "lstm";
    manifest["input_size"] = 1;
    manifest["hidden"] = model.hidden;
    manifest["direction"] = to_string(model.direction);
    manifest["activation"] = to_string(model.activation);
    manifest["normalization"] = {{"mean", model.norm.mean}, {"std", model.norm.std}};
    manifest["layout"] = "row-major float64 little-endian";
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t k = 0;
    model.params.for_each([&](const MatrixXd &m) {
        tensors.push_back({{"name", LstmParams::kNames[k++]}, {"rows", m.rows()}, {"cols", m.cols()}});
    });
    manifest["tensors"] = tensors;

    std::vector<std::uint8_t> buf(kModelMagic.begin(), kModelMagic.end());
    const std::string text = manifest.dump();
    put_u32(buf, static_cast<std::uint32_t>(text.size()));
    buf.insert(buf.end(), text.begin(), text.end());
    model.params.for_each([&](const MatrixXd &m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const auto bits = std::bit_cast<std::uint64_t>(m(r, c));
                for (int s = 0; s < 64; s += 8) buf.push_back(static_cast<std::uint8_t>((bits >> s) & 0xff));
            }
        }
    });
    return buf;
}

RnnModel decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) {
        fail_io("not a model file (bad magic)");
    }
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (bytes.size() - 8 < len) fail_io("truncated model manifest");
    RnnModel model;
    std::size_t pos = 8 + len;
    try {
        const auto manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
        if (manifest.at("format") != "qtraj-rnn" || manifest.at("version") != kModelVersion) {
            fail_io("unsupported model format");
        }
        model = RnnModel::zeros(manifest.at("hidden").get<int>(),
                                parse_direction(manifest.at("direction").get<std::string>()),
                                parse_activation(manifest.at("activation").get<std::string>()));
        model.norm = NormStats{manifest.at("normalization").at("mean").get<double>(),
                               manifest.at("normalization").at("std").get<double>()};
        const auto &tensors = manifest.at("tensors");
        std::size_t k = 0;
        bool shapes_ok = tensors.size() == LstmParams::kNames.size();
        model.params.for_each([&](const MatrixXd &m) {
            if (!shapes_ok) return;
            const auto &t = tensors.at(k);
            shapes_ok = t.at("name") == LstmParams::kNames[k] && t.at("rows").get<Eigen::Index>() == m.rows() &&
                        t.at("cols").get<Eigen::Index>() == m.cols();
            ++k;
        });
        if (!shapes_ok) fail_io("model tensor table does not match the declared architecture");
    } catch (const nlohmann::json::exception &e) {
        fail_io(std::string("corrupt model manifest: ") + e.what());
    } catch (const Error &e) {
        if (e.category() == ErrorCategory::io) throw;
        fail_io(std::string("corrupt model manifest: ") + e.what());
    }
    model.params.for_each([&](MatrixXd &m) {
        const auto need = static_cast<std::size_t>(m.size()) * 8;
        if (bytes.size() - pos < need) fail_io("truncated model parameters");
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                std::uint64_t bits = 0;
                for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
                m(r, c) = std::bit_cast<double>(bits);
                pos += 8;
            }
        }
    });
    if (pos != bytes.size()) fail_io("trailing bytes after model parameters");
    if (!model.params.all_finite()) fail_io("model parameters are not finite");
    return model;
}

void save_model(const std::filesystem::path &path, const RnnModel &model) {
    const auto bytes = encode_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io("failed writing " + path.string());
}

RnnModel load_model(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

}  // namespace qtraj
