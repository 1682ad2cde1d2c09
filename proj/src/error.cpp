// SPDX-License-Identifier: Apache-2.0
#include "uws/error.hpp"

#include <string>

namespace uws {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::numerical_failure: return "numerical-failure";
        case ErrorKind::degenerate_spectrum: return "degenerate-spectrum";
        case ErrorKind::internal_consistency: return "internal-consistency";
        case ErrorKind::rank_deficiency: return "rank-deficiency";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

const char* to_string(ParseErrorCode code) noexcept {
    switch (code) {
        case ParseErrorCode::bad_magic: return "bad-magic";
        case ParseErrorCode::truncated_header: return "truncated-header";
        case ParseErrorCode::truncated_manifest: return "truncated-manifest";
        case ParseErrorCode::invalid_manifest: return "invalid-manifest";
        case ParseErrorCode::unknown_dtype: return "unknown-dtype";
        case ParseErrorCode::truncated_payload: return "truncated-payload";
        case ParseErrorCode::length_mismatch: return "length-mismatch";
        case ParseErrorCode::non_finite_value: return "non-finite-value";
    }
    return "unknown";
}

ParseError::ParseError(ParseErrorCode code, std::uint64_t offset, const std::string& detail)
    : Error(ErrorKind::parse,
            std::string(to_string(code)) + " at byte offset " + std::to_string(offset) +
                (detail.empty() ? std::string() : ": " + detail)),
      code_(code),
      detail_(detail),
      offset_(offset) {}

}  // namespace uws
