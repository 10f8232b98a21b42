#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stmmot::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on runtime failure and 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stmmot::cli
