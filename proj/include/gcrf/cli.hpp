// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands: colorize, gradcheck, train, sample,
// eval, serve. Every long flag is also a key of the optional --config JSON
// file; command-line values win unless --config-priority is given. Errors
// go to `err` as one JSON object and select the exit code.
#pragma once

#include <ostream>

namespace gcrf {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcrf
