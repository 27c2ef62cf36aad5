#pragma once

// The `avparse` command line: gen, elaborate, calibrate, train, eval,
// export-logits, teacher-logits, report.
//
// Exit codes: 0 success, 2 usage/config/parse error, 1 runtime failure.

#include <string>
#include <vector>

namespace avp::cli {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Runs one command line; `args` excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

/// Lower-case hex SHA-256 of a file's contents.
std::string sha256_file(const std::string& path);

}  // namespace avp::cli
