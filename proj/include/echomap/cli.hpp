#pragma once

namespace echomap {

// Parses and runs one command. Returns the process exit code:
// 0 success, 1 usage/validation error, 2 numerical abort.
int run_cli(int argc, char** argv);

}  // namespace echomap
