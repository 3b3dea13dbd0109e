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

#include <stdexcept>
#include <string>

namespace qtraj {

/// Failure class of an operation; doubles as the CLI exit code.
enum class ErrorCategory : int {
    config = 1,
    io = 2,
    numeric = 3,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string &what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

inline const char *category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config:
            return "config";
        case ErrorCategory::io:
            return "io";
        case ErrorCategory::numeric:
            return "numeric";
    }
    return "unknown";
}

[[noreturn]] inline void fail_config(const std::string &msg) { throw Error(ErrorCategory::config, msg); }
[[noreturn]] inline void fail_io(const std::string &msg) { throw Error(ErrorCategory::io, msg); }
[[noreturn]] inline void fail_numeric(const std::string &msg) { throw Error(ErrorCategory::numeric, msg); }

}  // namespace qtraj
