// SPDX-License-Identifier: Apache-2.0
#include "uws/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return uws::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
