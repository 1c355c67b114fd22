// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "gcrf/cli.hpp"

int main(int argc, char** argv) { return gcrf::run_cli(argc, argv, std::cout, std::cerr); }
