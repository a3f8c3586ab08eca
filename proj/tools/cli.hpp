#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aemot::cli {

/// Full command line entry point; returns the process exit code. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aemot::cli
