// Command-line front end.  Everything the binary can do is reachable through
// run_cli so tests can drive it in-process or via the installed executable.
#pragma once

namespace ipreuse::cli {

// Parses argv and executes one subcommand.  Returns the process exit code:
//   0  success
//   1  configuration problem (bad flags, unknown config key, unreadable path)
//   2  data problem (malformed input file, impossible computation)
int run_cli(int argc, const char* const* argv);

}  // namespace ipreuse::cli
