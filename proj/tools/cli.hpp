#pragma once

namespace skinrf {

// Entry point of the skinrf command-line tool; returns the process exit status.
int run_cli(int argc, char** argv);

}  // namespace skinrf
