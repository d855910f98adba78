#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace geos::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;        // bad flags, bad config, missing inputs
inline constexpr int kExitDivergence = 3;   // non-finite loss during training/adaptation

// Executes one invocation of the command-line harness. `args` excludes the
// program name; `out`/`err` receive what the binary would print. The return
// value is the process exit code. Every subcommand records a manifest
// (resolved parameters, seeds, content hashes of file inputs) before it
// starts working, so any run can be audited or replayed from its outputs.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// SHA-256 of the file's bytes, lowercase hex.
std::string file_digest(const std::filesystem::path& path);

}  // namespace geos::cli
