#pragma once

namespace akd::cli {

/// Full command-line surface. Returns the process exit code:
/// 0 success, 2 usage/validation failure, 3 numeric failure.
int run(int argc, const char* const* argv);

}  // namespace akd::cli
