#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace percreach::cli {

enum ExitCode : int { kOk = 0, kUnsafe = 1, kConfigError = 2, kInternalError = 3 };

// Entry point shared by the binary and the tests. args excludes the program
// name.
int run(const std::vector<std::string>& args);

// Hex SHA-1 of "blob <size>\0" + content, as git hashes file contents.
std::string git_blob_sha1(std::string_view content);

}  // namespace percreach::cli
