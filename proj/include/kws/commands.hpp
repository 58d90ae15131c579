#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kws::cli {

/// Exit codes: 0 success, 1 usage or parameter error, 2 data error, 3 numeric abort.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace kws::cli
