#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attnbasin::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,  // validation failure, missing input, runtime error
    kUsage = 2,
};

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace attnbasin::cli
