#pragma once

#include <iosfwd>

namespace pqe {

// Entry point of the `pqe` tool. Returns 0 on success, 1 on runtime errors
// and 2 on usage errors (bad flags, missing inputs).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pqe
