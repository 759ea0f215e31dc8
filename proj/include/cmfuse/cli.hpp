#pragma once

namespace cmfuse::cli {

// Entry point for the cmfuse command line tool. Returns the process exit
// code: 0 success, 2 usage error, 3 I/O error, 4 invariant violation,
// 5 numerical failure.
int run(int argc, const char* const* argv);

}  // namespace cmfuse::cli
