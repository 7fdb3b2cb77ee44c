#pragma once

namespace piwan {

// Entry point behind the `piwan` executable; split out so tests can drive
// subcommands in-process. Returns 0 on success, 1 on configuration or usage
// errors, 2 on runtime failures.
int cli_main(int argc, char** argv);

}  // namespace piwan
