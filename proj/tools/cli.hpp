#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace upcr::cli {

/// Runs the `upcr` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on I/O and runtime failures, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace upcr::cli
