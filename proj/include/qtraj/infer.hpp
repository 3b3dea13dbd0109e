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
#include <iosfwd>
#include <span>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/data.hpp"
#include "qtraj/nn.hpp"

namespace qtraj {

/// P(y_t | y_0, a, V_0..V_t): causal prediction from a forward model.
PredictionSeries predict_forward(const RnnModel &model, std::span<const float> voltages, const Conditioning &prep,
                                 double dt);

/// P(y_t | y_T, b, V_T..V_t): anti-causal retrodiction from a backward
/// model, returned in forward time order.
PredictionSeries predict_backward(const RnnModel &model, std::span<const float> voltages, const Conditioning &meas,
                                  double dt);

/// Batched prediction over a dataset in record order, using the model's
/// direction and each record's own conditioning label (or the unknown
/// conditioning when `unknown_conditioning` is set).
std::vector<PredictionSeries> predict_all(const RnnModel &model, const Dataset &ds, double dt,
                                          bool unknown_conditioning = false, unsigned workers = 1,
                                          std::size_t batch_size = 1024);

double logit(double p);
double logistic(double x);

/// Forward-backward combination P = Pb Pf / (Pb Pf + (1 - Pb)(1 - Pf)),
/// evaluated as a sum of log-odds.
double smooth_probability(double backward_p, double forward_p);
PredictionSeries smooth(const PredictionSeries &forward_p, const PredictionSeries &backward_p);

/// Long-format prediction export; any of the three column groups may be empty.
struct PredictionTable {
    double dt = 0.0;
    std::vector<PredictionSeries> forward;
    std::vector<PredictionSeries> backward;
    std::vector<PredictionSeries> smoothed;

    std::size_t record_count() const;
};

/// Columns: record_id,t_us,axis,p_forward,p_backward,p_smoothed.
void write_prediction_csv(std::ostream &out, const PredictionTable &table);
PredictionTable read_prediction_csv(std::istream &in);

}  // namespace qtraj
