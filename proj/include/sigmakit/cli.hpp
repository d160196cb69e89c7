#pragma once

// Command-line front end: sigmakit <command> --config PATH [flags].
// Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.

#include <ostream>

namespace sigmakit {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sigmakit
