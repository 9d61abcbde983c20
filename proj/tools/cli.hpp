#pragma once

#include <ostream>

namespace mlsched {

// Exit status: 0 success, 1 configuration error, 2 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlsched
