#pragma once

#include <iosfwd>

namespace kernelsurf {

/// Entry point of the kernelsurf command line tool. Errors are reported on
/// `err` as one JSON line {"code": ..., "message": ...} with exit code 1.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kernelsurf
