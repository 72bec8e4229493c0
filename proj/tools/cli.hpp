#pragma once

// The dosebound command line: dgp, bounds, benchmark and check.

#include <iosfwd>
#include <string>
#include <vector>

namespace dosebound::cli {

/// Exit codes: 0 success, 1 computation or oracle failure, 2 usage error.
/// `args` excludes the program name. Data goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dosebound::cli
