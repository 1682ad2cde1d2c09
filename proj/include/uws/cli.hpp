// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uws::cli {

/// Runs one command line (program name excluded).
/// Exit codes: 0 ok, 1 usage, 2 data/parse/io, 3 numerical.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uws::cli
