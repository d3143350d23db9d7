#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace himuv {

// Runs one `himuv` subcommand. Returns 0 on success; on failure prints a single
// line `error kind=<kind> code=<n> message="..."` to err and returns the
// error kind's exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace himuv
