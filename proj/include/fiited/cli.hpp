#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fiited {

/// Entry point of the `fiited` command. Returns the process exit code; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fiited
