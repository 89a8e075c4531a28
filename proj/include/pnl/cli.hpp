#pragma once

namespace pnl {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDivergence = 3, kExitIo = 4 };

/// Entry point for `pnl <subcommand> ...`; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace pnl
