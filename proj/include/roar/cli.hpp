#pragma once

#include <iosfwd>

namespace roar {

/// Exit codes: 0 success, 2 usage error, 3 config error, 4 missing or
/// unreadable file, 5 invalid data, 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace roar
