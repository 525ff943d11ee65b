#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace cityest::cli {

/// Runs one command line (arguments without the program name) and returns
/// the process exit code: 0 success, 1 usage/config, 2 bad input data,
/// 3 solver non-convergence.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_hex(const std::filesystem::path& file);

}  // namespace cityest::cli
