#pragma once

// Command-line entry point: gen-data, train, search, infer, eval, analyze.

#include <string>
#include <vector>

namespace ptal::cli {

// Returns the process exit status; 0 iff every requested artifact was
// written. Log verbosity comes from PTAL_LOG_LEVEL (trace, debug, info,
// warn, error, off).
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace ptal::cli
