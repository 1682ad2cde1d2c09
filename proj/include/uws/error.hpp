// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uws {

enum class ErrorKind {
    invalid_argument,
    numerical_failure,
    degenerate_spectrum,
    internal_consistency,
    rank_deficiency,
    parse,
    io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

enum class ParseErrorCode {
    bad_magic,
    truncated_header,
    truncated_manifest,
    invalid_manifest,
    unknown_dtype,
    truncated_payload,
    length_mismatch,
    non_finite_value,
};

const char* to_string(ParseErrorCode code) noexcept;

/// Container parse failure; `offset` is the absolute byte offset in the file.
class ParseError : public Error {
public:
    ParseError(ParseErrorCode code, std::uint64_t offset, const std::string& detail);

    ParseErrorCode code() const noexcept { return code_; }
    std::uint64_t offset() const noexcept { return offset_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ParseErrorCode code_;
    std::string detail_;
    std::uint64_t offset_;
};

/// Singular normal equations; carries the ridge that would make them solvable.
class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(const std::string& what, double suggested_ridge)
        : Error(ErrorKind::rank_deficiency, what), suggested_ridge_(suggested_ridge) {}

    double suggested_ridge() const noexcept { return suggested_ridge_; }

private:
    double suggested_ridge_;
};

[[noreturn]] inline void throw_invalid(const std::string& what) {
    throw Error(ErrorKind::invalid_argument, what);
}

}  // namespace uws
