#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nfb/error.h"

namespace nfb {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;     // bad flags, config or validation
inline constexpr int kExitProtocol = 3;  // data or protocol errors
inline constexpr int kExitIo = 4;

int ExitCodeFor(ErrorKind kind);

// args excludes the program name. Results go to `out`, logs to `err`.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nfb
