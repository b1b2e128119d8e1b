#pragma once

#include <map>
#include <string>

namespace mdm {

/// Runs the command line. Returns 0 on success, 1 on invalid input (including
/// unknown flags), 2 on runtime failure.
int dispatch(int argc, const char* const* argv);

/// Reads a flat key=value file. Blank lines and lines starting with '#' are
/// skipped. Throws ValidationError on malformed lines or duplicate keys.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_hash(const std::string& content);

}  // namespace mdm
