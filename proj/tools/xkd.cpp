// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "xkd/cli/commands.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return xkd::run_cli(args, {std::cout, std::cerr});
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return xkd::kExitCheckFailed;
    }
}
