#pragma once

#include <spdlog/spdlog.h>

namespace kernelsurf {

// Shared logger writing to stderr. The level is read once from the
// KERNELSURF_LOG environment variable (trace, debug, info, warn, error, off);
// default is warn.
spdlog::logger& logger();

}  // namespace kernelsurf
