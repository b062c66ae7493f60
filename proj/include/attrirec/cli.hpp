#pragma once

#include <iosfwd>

namespace attrirec {

// Entry point of the attrirec tool. Returns the process exit code:
// 0 success, 2 input or configuration error, 3 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace attrirec
