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

// Single-layer LSTM predicting projective outcomes from measurement records.
//
// The conditioning label (preparation for the forward direction, final
// measurement for the backward one) is one-hot encoded into the initial
// hidden and cell states. Three sigmoid heads read P(y = 1) along X, Y, Z
// from the hidden state at every step; training applies cross-entropy at
// the last step only, on the head matching the target label's axis.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qtraj/core.hpp"
#include "qtraj/data.hpp"
#include "qtraj/error.hpp"

namespace qtraj {

enum class Direction : std::uint8_t { forward, backward };
enum class Activation : std::uint8_t { tanh, relu };

std::string to_string(Direction d);
std::string to_string(Activation a);
Direction parse_direction(std::string_view s);
Activation parse_activation(std::string_view s);

/// Conditioning label; std::nullopt is the "unknown" state (uniform 1/6 encoding).
using Conditioning = std::optional<Label>;

inline constexpr double kProbFloor = 1e-12;

/// All trainable tensors. Gate rows are stacked [input, forget, cell, output].
struct LstmParams {
    Eigen::MatrixXd w_input;   // 4n x 1
    Eigen::MatrixXd w_hidden;  // 4n x n
    Eigen::MatrixXd bias;      // 4n x 1
    Eigen::MatrixXd enc_h;     // n x 6
    Eigen::MatrixXd enc_c;     // n x 6
    Eigen::MatrixXd head_w;    // 3 x n
    Eigen::MatrixXd head_b;    // 3 x 1

    static constexpr std::array<const char *, 7> kNames{"w_input", "w_hidden", "bias", "enc_h",
                                                        "enc_c",   "head_w",   "head_b"};

    static LstmParams zeros(int hidden);
    LstmParams zeros_like() const;
    double squared_norm() const;
    bool all_finite() const;

    template <typename Fn>
    void for_each(Fn &&fn) {
        fn(w_input), fn(w_hidden), fn(bias), fn(enc_h), fn(enc_c), fn(head_w), fn(head_b);
    }
    template <typename Fn>
    void for_each(Fn &&fn) const {
        fn(w_input), fn(w_hidden), fn(bias), fn(enc_h), fn(enc_c), fn(head_w), fn(head_b);
    }
    /// Visits matching tensors of `this` and `other` pairwise.
    template <typename Fn>
    void zip(const LstmParams &other, Fn &&fn) {
        fn(w_input, other.w_input), fn(w_hidden, other.w_hidden), fn(bias, other.bias), fn(enc_h, other.enc_h),
            fn(enc_c, other.enc_c), fn(head_w, other.head_w), fn(head_b, other.head_b);
    }
};

using Gradients = LstmParams;

struct RnnModel {
    int hidden = 64;
    Direction direction = Direction::forward;
    Activation activation = Activation::tanh;
    NormStats norm;
    LstmParams params;

    /// Gate weights uniform in +-1/sqrt(n), forget bias +1, heads zero.
    static RnnModel initialized(int hidden, Direction direction, Activation activation, std::uint64_t seed);
    static RnnModel zeros(int hidden, Direction direction, Activation activation);
};

/// Initial (h, c) for a conditioning label.
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode_prep(const RnnModel &model, const Conditioning &label);
Eigen::VectorXd one_hot(const Conditioning &label);

/// Records laid out for a batched pass, already in consumption order.
struct SequenceBatch {
    Eigen::MatrixXd inputs;        // steps x B, normalized
    Eigen::MatrixXd conditioning;  // 6 x B
    std::vector<int> target_head;  // per column
    std::vector<std::uint8_t> target_bit;

    std::size_t steps() const { return static_cast<std::size_t>(inputs.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(conditioning.cols()); }
};

/// Lays out equal-length records for `model.direction`: the forward model
/// reads the record in time order conditioned on the preparation and targets
/// the final outcome; the backward model reads it reversed conditioned on the
/// final outcome and targets the preparation. Records flagged in `unknown`
/// get the uniform conditioning.
SequenceBatch make_batch(const RnnModel &model, std::span<const TrajectoryRecord *const> records,
                         const std::vector<bool> &unknown = {});

/// Head probabilities at every step: steps + 1 matrices of shape 3 x B.
std::vector<Eigen::MatrixXd> forward(const RnnModel &model, const SequenceBatch &batch);

/// Single-record convenience: hidden states (n x (steps+1)) and head probabilities.
struct ForwardResult {
    Eigen::MatrixXd hidden;
    PredictionSeries probs;
};
ForwardResult forward(const RnnModel &model, std::span<const float> voltages, const Conditioning &label,
                      const Eigen::VectorXd *dropout_mask = nullptr);

/// Binary cross-entropy with P clamped to [1e-12, 1 - 1e-12].
double loss(double p, int y);

/// Mean final-step loss of the batch and, if `grads` is given, its exact
/// gradient by backpropagation through time. `dropout_mask` (n x B, already
/// scaled) multiplies the hidden state feeding the heads.
double loss_and_gradient(const RnnModel &model, const SequenceBatch &batch, Gradients *grads,
                         const Eigen::MatrixXd *dropout_mask = nullptr);

Gradients backward(const RnnModel &model, std::span<const TrajectoryRecord *const> records);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    LstmParams m;
    LstmParams v;

    static AdamState for_model(const RnnModel &model);
};

void adam_step(RnnModel &model, const Gradients &grads, AdamState &state, double lr);

/// Scales the gradient down to global norm `max_norm` if it exceeds it; returns the pre-clip norm.
double clip_global_norm(Gradients &grads, double max_norm);

struct TrainConfig {
    int hidden = 64;
    Activation activation = Activation::tanh;
    int epochs = 10;
    std::size_t batch_size = 1024;
    double lr_start = 1e-3;
    double lr_end = 1e-6;
    double dropout_start = 0.30;
    double dropout_end = 0.0;
    double clip_norm = 5.0;
    double unknown_conditioning_fraction = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    /// Geometric interpolation from lr_start to lr_end.
    double learning_rate(int epoch) const;
    /// Linear interpolation from dropout_start to dropout_end.
    double dropout(int epoch) const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json &j);
};

struct EpochStats {
    int epoch = 0;
    double learning_rate = 0.0;
    double dropout = 0.0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
};

struct TrainResult {
    RnnModel model;
    std::vector<EpochStats> history;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string &what, RnnModel last_good)
        : Error(ErrorCategory::numeric, what), last_good_(std::move(last_good)) {}
    const RnnModel &last_good() const { return last_good_; }

private:
    RnnModel last_good_;
};

/// Mean final-step loss over a dataset, no dropout.
double evaluate_loss(const RnnModel &model, const Dataset &ds, std::size_t batch_size = 1024);

TrainResult train(const Dataset &train_set, const Dataset &eval_set, const TrainConfig &cfg, Direction direction,
                  const std::function<void(const EpochStats &)> &on_epoch = {});

// Model file: "QRNN", u32 manifest length, JSON manifest, then every tensor
// in manifest order as row-major little-endian float64.
std::vector<std::uint8_t> encode_model(const RnnModel &model);
RnnModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path &path, const RnnModel &model);
RnnModel load_model(const std::filesystem::path &path);

}  // namespace qtraj
