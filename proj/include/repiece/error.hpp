// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace repiece {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
    dimension,
    numeric,
    range,
    degenerate_input,
    precondition,
    format,
    config,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), m_kind(kind) {}

    ErrorKind kind() const noexcept {
        return m_kind;
    }

private:
    ErrorKind m_kind;
};

const char* to_string(ErrorKind kind) noexcept;

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) {
        fail(kind, what);
    }
}

}  // namespace repiece
