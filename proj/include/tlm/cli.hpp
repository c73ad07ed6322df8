#pragma once

#include <iosfwd>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point of the `tlm` tool. Errors are reported as a single line
/// "error: <kind>: <message>" on `err`.
int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

TLM_END_NAMESPACE
