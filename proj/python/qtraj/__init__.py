# Copyright 2026 The qtraj Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Continuously monitored qubit trajectories."""

from ._qtraj import (
    ConfigError,
    Dataset,
    Error,
    IOError,
    Model,
    NumericError,
    SimConfig,
    TrainConfig,
    calibrate,
    fit_params,
    simulate,
    sme_filter,
    sme_retrofilter,
    smooth,
    smooth_probability,
    tomography,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "Error",
    "IOError",
    "Model",
    "NumericError",
    "SimConfig",
    "TrainConfig",
    "calibrate",
    "fit_params",
    "simulate",
    "sme_filter",
    "sme_retrofilter",
    "smooth",
    "smooth_probability",
    "tomography",
    "train",
]
